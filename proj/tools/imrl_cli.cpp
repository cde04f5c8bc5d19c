#include "imrl/cli.hpp"

int main(int argc, char** argv) { return imrl::run_command(argc, argv); }
