#pragma once

// Synthetic labelled food images for representation learning, and the frame
// shuffling used by the order-prediction pretext task.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "imrl/errors.hpp"
#include "imrl/image.hpp"
#include "imrl/io.hpp"
#include "imrl/rng.hpp"
#include "imrl/simworld.hpp"

namespace imrl {

enum class Split { train, val, test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

inline Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw IoError("unknown split '" + std::string(name) + "'");
}

struct FoodImage {
  RgbImage image;  // encoder input size
  std::size_t type_label = 0;
  std::size_t property_label = 0;
  double fullness = 0.0;
  Split split = Split::train;
};

struct FoodImageDataset {
  std::vector<FoodSpec> foods;  // type label indexes this list
  std::vector<FoodImage> items;

  std::size_t num_types() const { return foods.size(); }

  std::vector<std::size_t> indices(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < items.size(); ++i)
      if (items[i].split == split) out.push_back(i);
    return out;
  }

  bool operator==(const FoodImageDataset& other) const {
    if (foods.size() != other.foods.size() || items.size() != other.items.size()) return false;
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto &a = items[i], &b = other.items[i];
      if (a.image != b.image || a.type_label != b.type_label || a.property_label != b.property_label ||
          a.fullness != b.fullness || a.split != b.split)
        return false;
    }
    return true;
  }
};

struct DatasetCounts {
  int train_per_type = 200;
  int val_per_type = 10;
  int test_per_type = 20;
};

struct AugmentationParams {
  double flip_probability = 0.5;
  double jitter = 20.0;  // additive, per channel, 0..255 units
  double blur_probability = 0.2;
  double blur_mix = 0.5;
  double crop_probability = 0.2;
  int min_crop = 28;
};

/// Fullness labels 0.2, 0.3, ..., 1.0.
inline constexpr std::array<double, 9> kFullnessLabels = {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

/// Bowls seen while collecting the image set: the demonstration bowl's
/// geometry with randomly drawn rim and floor colours.
inline BowlSpec random_bowl(Rng& rng) {
  static constexpr std::array<Rgb, 6> rims = {
      Rgb{165, 165, 170}, Rgb{40, 70, 170}, Rgb{175, 185, 200}, Rgb{60, 60, 60}, Rgb{180, 60, 50}, Rgb{90, 150, 90}};
  static constexpr std::array<Rgb, 6> floors = {
      Rgb{190, 190, 196}, Rgb{70, 110, 205}, kTableColor, Rgb{60, 60, 70}, Rgb{200, 170, 220}, Rgb{120, 180, 120}};
  BowlSpec bowl = default_bowl();
  bowl.name = "random";
  bowl.rim = rims[rng.index(rims.size())];
  bowl.floor = floors[rng.index(floors.size())];
  return bowl;
}

/// Full-resolution frame average-pooled to the encoder's input size.
inline RgbImage environment_view(const RgbImage& frame) { return average_pool(frame, 2); }

inline RgbImage augment(const RgbImage& src, Rng& rng, const AugmentationParams& a) {
  RgbImage img = src;
  const int w = img.width, h = img.height;
  if (rng.uniform() < a.crop_probability) {
    const int side = a.min_crop + static_cast<int>(rng.index(static_cast<std::size_t>(w - a.min_crop + 1)));
    const int ox = static_cast<int>(rng.index(static_cast<std::size_t>(w - side + 1)));
    const int oy = static_cast<int>(rng.index(static_cast<std::size_t>(h - side + 1)));
    RgbImage out(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.set(x, y, img.at(ox + x * side / w, oy + y * side / h));
    img = std::move(out);
  }
  if (rng.uniform() < a.flip_probability) {
    RgbImage out(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.set(x, y, img.at(w - 1 - x, y));
    img = std::move(out);
  }
  if (rng.uniform() < a.blur_probability) {
    RgbImage out(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        std::array<double, 3> sum{};
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            if (img.contains(x + dx, y + dy)) {
              const Rgb c = img.at(x + dx, y + dy);
              sum[0] += c.r;
              sum[1] += c.g;
              sum[2] += c.b;
              ++n;
            }
        const Rgb c = img.at(x, y);
        const double m = a.blur_mix;
        out.set(x, y, {clamp_channel((1 - m) * c.r + m * sum[0] / n), clamp_channel((1 - m) * c.g + m * sum[1] / n),
                       clamp_channel((1 - m) * c.b + m * sum[2] / n)});
      }
    img = std::move(out);
  }
  const double jr = rng.uniform(-a.jitter, a.jitter);
  const double jg = rng.uniform(-a.jitter, a.jitter);
  const double jb = rng.uniform(-a.jitter, a.jitter);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Rgb c = img.at(x, y);
      img.set(x, y, {clamp_channel(c.r + jr), clamp_channel(c.g + jg), clamp_channel(c.b + jb)});
    }
  return img;
}

struct DatasetSpec {
  std::vector<FoodSpec> foods = food_catalog();
  DatasetCounts counts;
  AugmentationParams augmentation;
  SimParams sim;
};

inline void validate(const DatasetSpec& spec) {
  std::array<int, kNumPropertyClasses> per_class{};
  for (const auto& f : spec.foods) ++per_class[static_cast<std::size_t>(f.property)];
  int classes = 0;
  for (int n : per_class) {
    if (n == 1) throw ConfigError("every property class in the dataset needs at least two food types");
    if (n >= 2) ++classes;
  }
  if (classes < 2) throw ConfigError("dataset needs at least two property classes");
  if (spec.counts.train_per_type < 1 || spec.counts.val_per_type < 0 || spec.counts.test_per_type < 0)
    throw ConfigError("dataset counts must be positive");
}

/// Renders every food type in randomly drawn bowls at labelled fill levels.
/// Training images are augmented; validation and test images are not.
inline FoodImageDataset gen_food_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  validate(spec);
  FoodImageDataset ds;
  ds.foods = spec.foods;
  for (std::size_t type = 0; type < spec.foods.size(); ++type) {
    const FoodSpec& food = spec.foods[type];
    Rng rng(derive_seed(seed, "dataset/" + food.name));
    auto emit = [&](int count, Split split) {
      for (int i = 0; i < count; ++i) {
        const BowlSpec bowl = random_bowl(rng);
        const double fill = kFullnessLabels[rng.index(kFullnessLabels.size())];
        const SimState state = make_env(bowl, food, fill, rng.next(), spec.sim);
        RgbImage view = environment_view(render_environment(state));
        if (split == Split::train) view = augment(view, rng, spec.augmentation);
        ds.items.push_back({std::move(view), type, static_cast<std::size_t>(food.property), fill, split});
      }
    };
    emit(spec.counts.train_per_type, Split::train);
    emit(spec.counts.val_per_type, Split::val);
    emit(spec.counts.test_per_type, Split::test);
  }
  return ds;
}

struct ShuffledFrames {
  std::vector<std::size_t> order;           // shuffled[i] = original[order[i]]
  std::vector<std::size_t> true_positions;  // original position of shuffled frame i
};

/// Uniform random permutation of N frames. `true_positions[i]` is the original
/// index of the i-th shuffled frame, so placing shuffled frame i at slot
/// true_positions[i] restores the sequence.
inline ShuffledFrames shuffle_frames(std::size_t n, std::uint64_t seed) {
  if (n < 2) throw ConfigError("frame shuffling needs at least two frames");
  ShuffledFrames s;
  s.order.resize(n);
  std::iota(s.order.begin(), s.order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(s.order);
  s.true_positions = s.order;
  return s;
}

template <typename T>
std::vector<T> apply_shuffle(const std::vector<T>& frames, const ShuffledFrames& s) {
  if (frames.size() != s.order.size()) throw ShapeError("frame count does not match the permutation");
  std::vector<T> out;
  out.reserve(frames.size());
  for (std::size_t i : s.order) out.push_back(frames[i]);
  return out;
}

template <typename T>
std::vector<T> restore_order(const std::vector<T>& shuffled, std::span<const std::size_t> true_positions) {
  if (shuffled.size() != true_positions.size()) throw ShapeError("frame count does not match the permutation");
  std::vector<T> out(shuffled.size());
  for (std::size_t i = 0; i < shuffled.size(); ++i) out[true_positions[i]] = shuffled[i];
  return out;
}

// JSONL: a header record naming the food types, then one record per image.

inline void write_dataset_jsonl(const std::filesystem::path& path, const FoodImageDataset& ds,
                                const std::string& config_hash) {
  auto out = open_for_write(path);
  nlohmann::ordered_json header;
  header["config_hash"] = config_hash;
  header["foods"] = nlohmann::ordered_json::array();
  for (const auto& f : ds.foods) header["foods"].push_back(f.name);
  out << header.dump() << '\n';
  for (const auto& item : ds.items) {
    nlohmann::ordered_json rec;
    rec["config_hash"] = config_hash;
    rec["type"] = item.type_label;
    rec["property"] = item.property_label;
    rec["fullness"] = item.fullness;
    rec["split"] = std::string(to_string(item.split));
    rec["image"] = image_to_json(item.image);
    out << rec.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

inline FoodImageDataset read_dataset_jsonl(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  FoodImageDataset ds;
  std::string line;
  std::size_t line_no = 0;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto rec = nlohmann::json::parse(line);
      if (line_no == 1) {
        for (const auto& name : rec.at("foods")) ds.foods.push_back(find_food(name.get<std::string>()));
        continue;
      }
      FoodImage item;
      item.image = image_from_json(rec.at("image"));
      item.type_label = rec.at("type").get<std::size_t>();
      item.property_label = rec.at("property").get<std::size_t>();
      item.fullness = rec.at("fullness").get<double>();
      item.split = parse_split(rec.at("split").get<std::string>());
      if (item.type_label >= ds.foods.size()) throw IoError("type label out of range");
      ds.items.push_back(std::move(item));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
  } catch (const ConfigError& e) {
    throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
  }
  if (ds.foods.empty()) throw IoError(path.string() + ": missing dataset header");
  return ds;
}

}  // namespace imrl
