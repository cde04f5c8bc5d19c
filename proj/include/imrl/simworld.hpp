#pragma once

// Deterministic top-down scooping simulator.
//
// The spoon pose is a 6-vector (x, y, depth, tilt, sweep, unused) in [-1, 1].
// x/y map linearly onto frame pixels; depth runs from -1 (home, above the
// table) through the rim to the bowl bottom. A scoop happens on the step where
// the sweep joint crosses from negative to non-negative while the tip is below
// the food surface; the outcome then depends on the food's property class.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "imrl/errors.hpp"
#include "imrl/geometry.hpp"
#include "imrl/image.hpp"
#include "imrl/rng.hpp"

namespace imrl {

enum class PropertyClass : int { solid = 0, semi_solid = 1, granular = 2, liquid = 3, mixture = 4 };

inline constexpr std::size_t kNumPropertyClasses = 5;
inline constexpr std::array<PropertyClass, kNumPropertyClasses> kAllPropertyClasses = {
    PropertyClass::solid, PropertyClass::semi_solid, PropertyClass::granular, PropertyClass::liquid,
    PropertyClass::mixture};

inline std::string_view to_string(PropertyClass p) {
  switch (p) {
    case PropertyClass::solid: return "solid";
    case PropertyClass::semi_solid: return "semi-solid";
    case PropertyClass::granular: return "granular";
    case PropertyClass::liquid: return "liquid";
    case PropertyClass::mixture: return "mixture";
  }
  return "unknown";
}

inline PropertyClass parse_property(std::string_view name) {
  for (PropertyClass p : kAllPropertyClasses)
    if (to_string(p) == name) return p;
  throw ConfigError("unknown property class '" + std::string(name) + "'");
}

struct FoodSpec {
  std::string name;
  PropertyClass property = PropertyClass::granular;
  Rgb color;
  std::vector<Rgb> palette;      // extra body colours, chosen per 2x2 block
  std::optional<Rgb> item_color;  // chunks in a mixture
  int texture_amplitude = 16;

  /// Every colour a food pixel can be rendered around.
  std::vector<Rgb> segmentation_colors() const {
    std::vector<Rgb> out{color};
    out.insert(out.end(), palette.begin(), palette.end());
    if (item_color) out.push_back(*item_color);
    return out;
  }

  void validate() const {
    if (texture_amplitude < 0 || texture_amplitude > 64) throw ConfigError("food texture amplitude out of range");
  }
};

enum class BowlShape { circle, square };

struct BowlSpec {
  std::string name;
  BowlShape shape = BowlShape::circle;
  int radius = 26;  // outer radius or half side, pixels
  int wall = 2;
  Rgb rim;
  Rgb floor;
  int cx = 32;
  int cy = 32;

  int interior_radius() const { return radius - wall; }

  bool in_interior(int x, int y) const {
    const int dx = x - cx, dy = y - cy;
    const int r = interior_radius();
    if (shape == BowlShape::circle) return dx * dx + dy * dy <= r * r;
    return std::max(std::abs(dx), std::abs(dy)) <= r;
  }
  bool in_bowl(int x, int y) const {
    const int dx = x - cx, dy = y - cy;
    if (shape == BowlShape::circle) return dx * dx + dy * dy <= radius * radius;
    return std::max(std::abs(dx), std::abs(dy)) <= radius;
  }
  /// Distance from a real-valued point to the inner wall (negative outside).
  double interior_clearance(double px, double py) const {
    const double dx = px - cx, dy = py - cy;
    const double r = interior_radius();
    if (shape == BowlShape::circle) return r - std::hypot(dx, dy);
    return r - std::max(std::abs(dx), std::abs(dy));
  }
};

/// Dynamics and rendering constants. Depth values are in pose units.
struct SimParams {
  int frame_size = 64;
  int hand_size = 32;

  double rim_depth = -0.4;
  double bottom_depth = 0.6;
  double bottom_collision_depth = 0.7;
  double approach_depth = -0.6;
  double lift_depth = -0.5;
  double home_region_depth = -0.8;

  double spoon_capacity = 0.05;
  double footprint_radius = 3.0;
  double collision_clearance = 1.0;
  double success_threshold = 0.02;

  double liquid_speed_limit = 0.15;
  double liquid_lift_step = 0.10;
  double granular_min_dig = 0.06;
  double granular_tilt_min = 0.3;
  double granular_tilt_max = 0.8;
  double granular_low_tilt_factor = 0.2;
  double liquid_min_dig = 0.02;
  double liquid_tilt_max = 0.25;
  double semi_chunk_depth = 0.25;
  double semi_tilt_max = 0.8;
  int item_radius = 4;
  double item_volume = 0.04;
  double solid_min_dig = 0.06;
  double solid_tilt_min = 0.3;

  double food_area_fraction = 0.9;
  double crumb_probability = 0.035;
  double max_offset_fraction = 0.8;

  int density_radius = 9;
  double margin = 3.0;
};

struct ExpertStrategy {
  double dig;
  double tilt;
  bool slow_lift;
};

inline ExpertStrategy expert_strategy(PropertyClass p) {
  switch (p) {
    case PropertyClass::liquid: return {0.12, 0.0, true};
    case PropertyClass::mixture: return {0.12, 0.0, true};
    case PropertyClass::granular: return {0.18, 0.5, false};
    case PropertyClass::semi_solid: return {0.40, 0.1, false};
    case PropertyClass::solid: return {0.18, 0.5, false};
  }
  return {0.18, 0.5, false};
}

using Pose = std::array<double, 6>;

namespace pose_index {
inline constexpr std::size_t x = 0, y = 1, depth = 2, tilt = 3, sweep = 4, unused = 5;
}

inline constexpr Pose kHomePose = {0.0, 0.0, -1.0, 0.0, -1.0, 0.0};

struct SimState {
  BowlSpec bowl;
  FoodSpec food;
  SimParams params;
  double fill = 0.0;
  double initial_fill = 0.0;
  Pose pose = kHomePose;
  int step_index = 0;
  std::uint64_t texture_seed = 0;
  Rng rng;
  double blob_dir_x = 1.0;
  double blob_dir_y = 0.0;
  double blob_offset = 0.0;  // fraction of the free radius
  std::vector<Pixel> items;
  double load = 0.0;
  bool loaded = false;
  bool carrying = false;  // secured load above the rim, until deposit
  bool used = false;      // spoon has touched food at least once
  double cumulative_scooped = 0.0;
  double delivered = 0.0;
  std::vector<bool> spill_history;

  bool operator==(const SimState& other) const {
    return bowl.name == other.bowl.name && food.name == other.food.name && fill == other.fill &&
           initial_fill == other.initial_fill && pose == other.pose && step_index == other.step_index &&
           texture_seed == other.texture_seed && rng == other.rng && blob_dir_x == other.blob_dir_x &&
           blob_dir_y == other.blob_dir_y && blob_offset == other.blob_offset && items == other.items &&
           load == other.load && loaded == other.loaded && carrying == other.carrying && used == other.used &&
           cumulative_scooped == other.cumulative_scooped && delivered == other.delivered &&
           spill_history == other.spill_history;
  }
};

struct StepOutcome {
  double scooped_amount = 0.0;
  bool spilled = false;
  bool collided_with_bowl = false;
};

struct Observation {
  RgbImage environment;  // frame_size^2
  RgbImage hand;         // hand_size^2, centred on the spoon tip
  Pose proprio{};
};

// ---------------------------------------------------------------------------
// Pose <-> pixel mapping and derived quantities.

inline double pose_to_pixel(double v, int size) { return (std::clamp(v, -1.0, 1.0) + 1.0) * 0.5 * (size - 1); }
inline double pixel_to_pose(double px, int size) { return 2.0 * px / (size - 1) - 1.0; }

/// Depth of the food surface for a fill level.
inline double surface_depth(const SimParams& p, double fill) {
  return p.bottom_depth - (p.bottom_depth - p.rim_depth) * fill;
}

/// Target dig depth of the scripted expert: depth_base + depth_gain * (1 - l),
/// capped at the bowl bottom.
inline double expert_depth(const SimParams& p, PropertyClass property, double fill) {
  const double depth_base = p.rim_depth + expert_strategy(property).dig;
  const double depth_gain = p.bottom_depth - p.rim_depth;
  return std::min(depth_base + depth_gain * (1.0 - fill), p.bottom_depth);
}

inline int interior_area(const BowlSpec& bowl, int frame) {
  int n = 0;
  for (int y = 0; y < frame; ++y)
    for (int x = 0; x < frame; ++x) n += bowl.in_interior(x, y) ? 1 : 0;
  return n;
}

struct FoodBlob {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
  bool contains(int x, int y) const {
    const double dx = x - cx, dy = y - cy;
    return dx * dx + dy * dy <= radius * radius;
  }
};

inline bool centred_food(PropertyClass p) { return p == PropertyClass::liquid || p == PropertyClass::mixture; }

inline FoodBlob food_blob(const SimState& s) {
  const int area = interior_area(s.bowl, s.params.frame_size);
  const double target = std::max(0.0, s.fill) * area * s.params.food_area_fraction;
  FoodBlob blob;
  blob.radius = std::sqrt(target / std::numbers::pi);
  const double free = std::max(0.0, s.bowl.interior_radius() - blob.radius);
  const double offset = centred_food(s.food.property) ? 0.0 : s.blob_offset * free;
  blob.cx = s.bowl.cx + s.blob_dir_x * offset;
  blob.cy = s.bowl.cy + s.blob_dir_y * offset;
  return blob;
}

inline bool in_item(const SimState& s, int x, int y) {
  const int r2 = s.params.item_radius * s.params.item_radius;
  for (const Pixel& it : s.items) {
    const int dx = x - it.x, dy = y - it.y;
    if (dx * dx + dy * dy <= r2) return true;
  }
  return false;
}

/// Ground-truth food mask of the current state.
inline BinaryMask food_mask(const SimState& s) {
  const int n = s.params.frame_size;
  BinaryMask mask(n, n);
  if (s.fill <= 0.0) return mask;
  const FoodBlob blob = food_blob(s);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if (!s.bowl.in_interior(x, y)) continue;
      bool food = false;
      switch (s.food.property) {
        case PropertyClass::solid: food = in_item(s, x, y); break;
        case PropertyClass::mixture: food = blob.contains(x, y) || in_item(s, x, y); break;
        case PropertyClass::granular:
          food = blob.contains(x, y) ||
                 unit_from_bits(hash_coords(s.texture_seed, x, y, 7)) < s.params.crumb_probability;
          break;
        default: food = blob.contains(x, y); break;
      }
      if (food) mask.set(x, y, true);
    }
  return mask;
}

// ---------------------------------------------------------------------------
// Environment construction.

inline void check_bowl(const BowlSpec& bowl, int frame) {
  if (bowl.wall < 1 || bowl.radius <= bowl.wall + 2) throw ConfigError("bowl '" + bowl.name + "' is degenerate");
  const int clearance = 2;
  if (bowl.cx - bowl.radius < clearance || bowl.cy - bowl.radius < clearance ||
      bowl.cx + bowl.radius > frame - 1 - clearance || bowl.cy + bowl.radius > frame - 1 - clearance)
    throw ConfigError("bowl '" + bowl.name + "' does not fit inside the frame");
}

inline void place_items(SimState& s, std::size_t count, Rng& rng) {
  const FoodBlob blob = food_blob(s);
  const int r = s.params.item_radius;
  const double spread = std::max(blob.radius, static_cast<double>(r) + 1.0);
  for (std::size_t placed = 0, tries = 0; placed < count && tries < count * 200; ++tries) {
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double rad = spread * std::sqrt(rng.uniform());
    const Pixel p{static_cast<int>(std::lround(blob.cx + rad * std::cos(angle))),
                  static_cast<int>(std::lround(blob.cy + rad * std::sin(angle)))};
    if (s.bowl.interior_clearance(p.x, p.y) < r + 1.0) continue;
    bool overlap = false;
    for (const Pixel& q : s.items)
      if ((q.x - p.x) * (q.x - p.x) + (q.y - p.y) * (q.y - p.y) < (2 * r - 1) * (2 * r - 1)) overlap = true;
    if (overlap && tries < count * 100) continue;
    s.items.push_back(p);
    ++placed;
  }
}

inline SimState make_env(const BowlSpec& bowl, const FoodSpec& food, double fill, std::uint64_t seed,
                         const SimParams& params = {}) {
  if (!(fill >= 0.0 && fill <= 1.0)) throw ConfigError("fill must lie in [0, 1]");
  check_bowl(bowl, params.frame_size);
  food.validate();
  SimState s;
  s.bowl = bowl;
  s.food = food;
  s.params = params;
  s.fill = fill;
  s.initial_fill = fill;
  s.pose = kHomePose;
  s.rng = Rng(seed);
  s.texture_seed = s.rng.next();
  const double angle = s.rng.uniform(0.0, 2.0 * std::numbers::pi);
  s.blob_dir_x = std::cos(angle);
  s.blob_dir_y = std::sin(angle);
  s.blob_offset = s.rng.uniform(0.0, params.max_offset_fraction);
  if (fill > 0.0) {
    if (food.property == PropertyClass::solid) {
      place_items(s, static_cast<std::size_t>(std::ceil(fill / params.item_volume - 1e-9)), s.rng);
    } else if (food.property == PropertyClass::mixture) {
      place_items(s, static_cast<std::size_t>(std::ceil(0.3 * fill / params.item_volume)), s.rng);
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Rendering.

inline double texture_pattern(PropertyClass p, int x, int y, bool item_pixel, bool item_edge) {
  if (item_pixel) return item_edge ? -1.0 : 1.0;
  switch (p) {
    case PropertyClass::granular: return ((x / 4 + y / 4) & 1) ? 1.0 : -1.0;
    case PropertyClass::liquid:
    case PropertyClass::mixture: return ((y / 4) & 1) ? 1.0 : -1.0;
    case PropertyClass::semi_solid: return (((x + y) / 4) & 1) ? 1.0 : -1.0;
    case PropertyClass::solid: return 1.0;
  }
  return 0.0;
}

inline bool item_edge(const SimState& s, int x, int y) {
  const double inner = s.params.item_radius - 1.5;
  for (const Pixel& it : s.items) {
    const int dx = x - it.x, dy = y - it.y;
    const int d2 = dx * dx + dy * dy;
    if (d2 <= s.params.item_radius * s.params.item_radius) return d2 > inner * inner;
  }
  return false;
}

inline Rgb food_pixel_color(const SimState& s, int x, int y, bool item_pixel) {
  const FoodSpec& f = s.food;
  Rgb base = f.color;
  if (item_pixel && f.item_color) {
    base = *f.item_color;
  } else if (!f.palette.empty()) {
    const std::size_t choice = hash_coords(s.texture_seed, x / 2, y / 2, 13) % (f.palette.size() + 1);
    if (choice > 0) base = f.palette[choice - 1];
  }
  const double pattern = texture_pattern(f.property, x, y, item_pixel, item_pixel && item_edge(s, x, y));
  const double noise = 2.0 * unit_from_bits(hash_coords(s.texture_seed, x, y, 11)) - 1.0;
  const double offset = f.texture_amplitude * (0.6 * pattern + 0.4 * noise);
  return {clamp_channel(base.r + offset), clamp_channel(base.g + offset), clamp_channel(base.b + offset)};
}

inline constexpr Rgb kTableColor{125, 100, 80};

inline RgbImage render_environment(const SimState& s) {
  const int n = s.params.frame_size;
  RgbImage img(n, n, kTableColor);
  const BinaryMask mask = food_mask(s);
  const bool has_items = s.food.property == PropertyClass::solid || s.food.property == PropertyClass::mixture;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if (!s.bowl.in_bowl(x, y)) continue;
      if (!s.bowl.in_interior(x, y)) {
        img.set(x, y, s.bowl.rim);
      } else if (mask.at(x, y)) {
        img.set(x, y, food_pixel_color(s, x, y, has_items && in_item(s, x, y)));
      } else {
        img.set(x, y, s.bowl.floor);
      }
    }
  return img;
}

inline constexpr Rgb kSpoonColor{150, 150, 160};

inline RgbImage render_hand(const SimState& s, const RgbImage& environment) {
  const int n = s.params.frame_size;
  const int hs = s.params.hand_size;
  const int tx = static_cast<int>(std::lround(pose_to_pixel(s.pose[pose_index::x], n)));
  const int ty = static_cast<int>(std::lround(pose_to_pixel(s.pose[pose_index::y], n)));
  RgbImage hand = crop_centered(environment, tx, ty, hs);
  const double lowered = std::clamp((s.pose[pose_index::depth] + 1.0) * 0.5, 0.0, 1.0);
  const double shade = 1.0 - 0.45 * lowered;
  for (auto& channel : hand.data) channel = clamp_channel(channel * shade);
  const int c = hs / 2;
  for (int y = 0; y < hs; ++y)
    for (int x = 0; x < hs; ++x) {
      const int d2 = (x - c) * (x - c) + (y - c) * (y - c);
      if (d2 <= 9) hand.set(x, y, kSpoonColor);
      if ((s.loaded || s.carrying) && d2 <= 4) hand.set(x, y, s.food.color);
      else if (s.used && d2 == 0) hand.set(x, y, s.food.color);
    }
  return hand;
}

inline Observation render(const SimState& s) {
  Observation obs;
  obs.environment = render_environment(s);
  obs.hand = render_hand(s, obs.environment);
  obs.proprio = s.pose;
  return obs;
}

// ---------------------------------------------------------------------------
// Dynamics.

inline double footprint_coverage(const BinaryMask& mask, double px, double py, double radius) {
  const int cx = static_cast<int>(std::lround(px));
  const int cy = static_cast<int>(std::lround(py));
  const int r = static_cast<int>(std::ceil(radius));
  int total = 0, food = 0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy > radius * radius) continue;
      ++total;
      if (mask.contains(cx + dx, cy + dy) && mask.at(cx + dx, cy + dy)) ++food;
    }
  return total ? static_cast<double>(food) / total : 0.0;
}

inline double speed_limit(const SimParams& p, PropertyClass property) {
  return centred_food(property) ? p.liquid_speed_limit : std::numeric_limits<double>::infinity();
}

namespace detail {

struct ScoopResult {
  double amount = 0.0;
  bool spilled = false;
};

inline std::optional<std::size_t> item_under_tip(const SimState& s, double px, double py) {
  const double r = s.params.item_radius;
  std::optional<std::size_t> best;
  double best_d2 = r * r;
  for (std::size_t i = 0; i < s.items.size(); ++i) {
    const double dx = px - s.items[i].x, dy = py - s.items[i].y;
    const double d2 = dx * dx + dy * dy;
    if (d2 <= best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return best;
}

inline ScoopResult resolve_scoop(SimState& s, double depth, double tilt) {
  const SimParams& p = s.params;
  const int n = p.frame_size;
  const double px = pose_to_pixel(s.pose[pose_index::x], n);
  const double py = pose_to_pixel(s.pose[pose_index::y], n);
  const double dig = depth - surface_depth(p, s.fill);
  const BinaryMask mask = food_mask(s);
  const double coverage = footprint_coverage(mask, px, py, p.footprint_radius);
  ScoopResult r;
  switch (s.food.property) {
    case PropertyClass::granular:
      if (dig < p.granular_min_dig) break;
      r.amount = p.spoon_capacity * coverage;
      if (tilt < p.granular_tilt_min) r.amount *= p.granular_low_tilt_factor;
      if (tilt > p.granular_tilt_max) r.spilled = true;
      break;
    case PropertyClass::liquid:
      if (dig < p.liquid_min_dig) break;
      r.amount = p.spoon_capacity * coverage;
      if (tilt > p.liquid_tilt_max) r.spilled = true;
      break;
    case PropertyClass::semi_solid: {
      const double thickness = (p.bottom_depth - p.rim_depth) * s.fill;
      if (dig < std::min(p.semi_chunk_depth, thickness) - 1e-9) break;
      r.amount = p.spoon_capacity * coverage;
      if (tilt > p.semi_tilt_max) r.spilled = true;
      break;
    }
    case PropertyClass::solid: {
      if (dig < p.solid_min_dig || tilt < p.solid_tilt_min) break;
      if (auto hit = item_under_tip(s, px, py)) {
        r.amount = p.item_volume;
        s.items.erase(s.items.begin() + static_cast<std::ptrdiff_t>(*hit));
      }
      break;
    }
    case PropertyClass::mixture: {
      if (dig < p.liquid_min_dig) break;
      r.amount = p.spoon_capacity * coverage;
      if (auto hit = item_under_tip(s, px, py)) {
        r.amount += p.item_volume;
        s.items.erase(s.items.begin() + static_cast<std::ptrdiff_t>(*hit));
      }
      if (tilt > p.liquid_tilt_max) r.spilled = true;
      break;
    }
  }
  r.amount = std::clamp(r.amount, 0.0, s.fill);
  return r;
}

}  // namespace detail

/// Advances the simulator by one action, in place.
inline StepOutcome step_in_place(SimState& s, std::span<const double> action) {
  if (action.size() != 6) throw ActionError("action must have 6 entries");
  for (double v : action)
    if (!std::isfinite(v)) throw ActionError("action contains a non-finite value");
  const SimParams& p = s.params;
  const int n = p.frame_size;
  Pose target;
  for (std::size_t i = 0; i < 6; ++i) target[i] = std::clamp(action[i], -1.0, 1.0);
  const Pose prev = s.pose;
  StepOutcome out;

  constexpr int kPathSamples = 8;
  for (int k = 0; k <= kPathSamples; ++k) {
    const double a = static_cast<double>(k) / kPathSamples;
    const double depth = prev[pose_index::depth] + a * (target[pose_index::depth] - prev[pose_index::depth]);
    if (depth > p.bottom_collision_depth) out.collided_with_bowl = true;
    if (depth <= p.rim_depth) continue;
    const double x = prev[pose_index::x] + a * (target[pose_index::x] - prev[pose_index::x]);
    const double y = prev[pose_index::y] + a * (target[pose_index::y] - prev[pose_index::y]);
    if (s.bowl.interior_clearance(pose_to_pixel(x, n), pose_to_pixel(y, n)) < p.collision_clearance)
      out.collided_with_bowl = true;
  }

  if (s.loaded) {
    const bool inside = prev[pose_index::depth] > p.rim_depth || target[pose_index::depth] > p.rim_depth;
    const double dx = target[0] - prev[0], dy = target[1] - prev[1], dz = target[2] - prev[2];
    if (inside && std::sqrt(dx * dx + dy * dy + dz * dz) > speed_limit(p, s.food.property)) {
      out.spilled = true;
      s.loaded = false;
      s.load = 0.0;
    }
  }

  s.pose = target;
  ++s.step_index;

  const bool sweep_started = prev[pose_index::sweep] < 0.0 && target[pose_index::sweep] >= 0.0;
  if (sweep_started) s.carrying = false;
  if (!s.loaded && sweep_started && s.fill > 0.0 && target[pose_index::depth] > surface_depth(p, s.fill)) {
    const auto r = detail::resolve_scoop(s, target[pose_index::depth], target[pose_index::tilt]);
    s.fill -= r.amount;
    s.cumulative_scooped += r.amount;
    out.scooped_amount = r.amount;
    s.used = true;
    if (r.spilled) {
      out.spilled = true;
    } else if (r.amount > 0.0) {
      s.loaded = true;
      s.load = r.amount;
    }
  }

  if (s.loaded && target[pose_index::depth] <= p.rim_depth) {
    s.delivered += s.load;
    s.load = 0.0;
    s.loaded = false;
    s.carrying = true;
  }
  if (target[pose_index::sweep] < 0.0 && prev[pose_index::sweep] >= 0.0) s.carrying = false;

  s.spill_history.push_back(out.spilled);
  (void)n;
  return out;
}

inline std::pair<SimState, StepOutcome> step(SimState s, std::span<const double> action) {
  const StepOutcome out = step_in_place(s, action);
  return {std::move(s), out};
}

// ---------------------------------------------------------------------------
// Scripted expert.

inline ScoopPoint expert_target(const SimState& s) {
  const BinaryMask mask = food_mask(s);
  return optimal_scoop_point(mask, s.params.density_radius, s.params.margin);
}

/// Phase machine: approach above the scoop point, descend to a fill-dependent
/// depth, sweep, lift (slowly for liquids), then return home.
inline Pose expert_action(const SimState& s) {
  const SimParams& p = s.params;
  const Pose& pose = s.pose;
  const ExpertStrategy strategy = expert_strategy(s.food.property);
  constexpr double tol = 1e-9;
  if (pose[pose_index::sweep] < 0.0) {
    if (s.fill <= 0.0) throw NoFeasiblePoint("bowl is empty");
    const ScoopPoint target = expert_target(s);
    const double tx = pixel_to_pose(target.x, p.frame_size);
    const double ty = pixel_to_pose(target.y, p.frame_size);
    const double depth = expert_depth(p, s.food.property, s.fill);
    const bool above = std::abs(pose[pose_index::x] - tx) < 1e-6 && std::abs(pose[pose_index::y] - ty) < 1e-6;
    if (!above) return {tx, ty, p.approach_depth, 0.0, -1.0, 0.0};
    if (pose[pose_index::depth] < depth - tol) return {tx, ty, depth, 0.0, -1.0, 0.0};
    return {tx, ty, depth, strategy.tilt, 1.0, 0.0};
  }
  if (pose[pose_index::depth] > p.lift_depth + tol) {
    const double next =
        strategy.slow_lift ? std::max(pose[pose_index::depth] - p.liquid_lift_step, p.lift_depth) : p.lift_depth;
    return {pose[pose_index::x], pose[pose_index::y], next, pose[pose_index::tilt], 1.0, 0.0};
  }
  return kHomePose;
}

// ---------------------------------------------------------------------------
// Attempts and metrics.

/// Attempt ends once the spoon is back in the home region after a sweep.
inline bool attempt_finished(const SimState& s, bool swept) {
  return swept && s.pose[pose_index::sweep] < 0.0 && s.pose[pose_index::depth] <= s.params.home_region_depth;
}

/// Folds the per-step outcomes of one attempt into a single attempt outcome:
/// scooped_amount is the food actually carried out of the bowl.
struct AttemptTracker {
  StepOutcome outcome;
  double delivered_at_start = 0.0;
  bool swept = false;

  explicit AttemptTracker(const SimState& s) : delivered_at_start(s.delivered) {}

  void observe(const Pose& previous_pose, const SimState& after, const StepOutcome& step_outcome) {
    if (previous_pose[pose_index::sweep] < 0.0 && after.pose[pose_index::sweep] >= 0.0) swept = true;
    outcome.spilled = outcome.spilled || step_outcome.spilled;
    outcome.collided_with_bowl = outcome.collided_with_bowl || step_outcome.collided_with_bowl;
    outcome.scooped_amount = outcome.spilled ? 0.0 : after.delivered - delivered_at_start;
  }
};

inline bool is_success(const StepOutcome& attempt, double threshold = 0.02) {
  return attempt.scooped_amount >= threshold && !attempt.spilled && !attempt.collided_with_bowl;
}

struct EpisodeMetrics {
  double sur = 0.0;
  double sfr = 0.0;
  double afs = 0.0;
  std::size_t attempts = 0;
};

inline constexpr std::size_t kDefaultAfsWindow = 10;

/// SUR = successes / attempts, SFR = (spills + failures) / attempts, AFS = food
/// carried out over the first `afs_window` attempts.
inline EpisodeMetrics episode_metrics(std::span<const StepOutcome> attempts, std::size_t afs_window = kDefaultAfsWindow,
                                      double success_threshold = 0.02) {
  if (attempts.empty()) throw MetricsError("episode_metrics needs at least one attempt");
  EpisodeMetrics m;
  m.attempts = attempts.size();
  std::size_t successes = 0;
  for (std::size_t i = 0; i < attempts.size(); ++i) {
    if (is_success(attempts[i], success_threshold)) ++successes;
    if (i < afs_window) m.afs += attempts[i].scooped_amount;
  }
  m.sur = static_cast<double>(successes) / attempts.size();
  m.sfr = static_cast<double>(attempts.size() - successes) / attempts.size();
  return m;
}

/// Runs one attempt with `controller` choosing actions; returns the folded outcome.
template <typename Controller>
StepOutcome run_attempt(SimState& s, Controller&& controller, int max_steps = 32) {
  AttemptTracker tracker(s);
  for (int t = 0; t < max_steps; ++t) {
    const Pose previous = s.pose;
    const Pose action = controller(s);
    const StepOutcome o = step_in_place(s, action);
    tracker.observe(previous, s, o);
    if (attempt_finished(s, tracker.swept)) break;
  }
  return tracker.outcome;
}

// ---------------------------------------------------------------------------
// Catalogue of bowls and foods.

inline BowlSpec default_bowl() { return {"white_circle", BowlShape::circle, 26, 2, {165, 165, 170}, {190, 190, 196}, 32, 32}; }

inline std::vector<BowlSpec> bowl_catalog() {
  return {
      default_bowl(),
      {"large_blue_circle", BowlShape::circle, 29, 2, {40, 70, 170}, {70, 110, 205}, 32, 32},
      {"small_blue_circle", BowlShape::circle, 20, 2, {40, 70, 170}, {70, 110, 205}, 32, 32},
      {"transparent_square", BowlShape::square, 23, 2, {175, 185, 200}, kTableColor, 32, 32},
  };
}

inline std::vector<FoodSpec> food_catalog() {
  using P = PropertyClass;
  return {
      {"milk", P::liquid, {248, 248, 242}, {}, std::nullopt, 10},
      {"water", P::liquid, {150, 195, 235}, {}, std::nullopt, 10},
      {"juice", P::liquid, {240, 150, 40}, {}, std::nullopt, 10},
      {"rice", P::granular, {236, 230, 212}, {}, std::nullopt, 22},
      {"cereals", P::granular, {215, 160, 70}, {}, std::nullopt, 22},
      {"beans", P::granular, {120, 70, 40}, {}, std::nullopt, 22},
      {"jello", P::semi_solid, {205, 40, 60}, {}, std::nullopt, 16},
      {"yogurt", P::semi_solid, {242, 238, 224}, {}, std::nullopt, 16},
      {"soup", P::mixture, {195, 125, 60}, {}, Rgb{235, 110, 30}, 12},
      {"stew", P::mixture, {135, 85, 50}, {}, Rgb{90, 60, 40}, 12},
      {"carrots", P::solid, {235, 110, 30}, {}, std::nullopt, 16},
      {"grapes", P::solid, {110, 45, 120}, {}, std::nullopt, 16},
  };
}

/// Foods that never appear in demonstrations; bean_mix is absent from the
/// image dataset as well.
inline FoodSpec bean_mix() {
  return {"bean_mix", PropertyClass::granular, {45, 40, 35}, {{70, 150, 60}, {225, 200, 60}}, std::nullopt, 22};
}

inline FoodSpec find_food(std::string_view name) {
  for (auto& f : food_catalog())
    if (f.name == name) return f;
  if (name == "bean_mix") return bean_mix();
  throw ConfigError("unknown food '" + std::string(name) + "'");
}

inline BowlSpec find_bowl(std::string_view name) {
  for (auto& b : bowl_catalog())
    if (b.name == name) return b;
  throw ConfigError("unknown bowl '" + std::string(name) + "'");
}

struct EnvSpec {
  std::string name;
  BowlSpec bowl;
  FoodSpec food;
};

inline EnvSpec make_env_spec(std::string_view bowl, std::string_view food) {
  return {std::string(bowl) + "/" + std::string(food), find_bowl(bowl), find_food(food)};
}

/// Demonstration setting: the default bowl with cereals, jello and water.
inline std::vector<EnvSpec> in_distribution_suite() {
  return {make_env_spec("white_circle", "cereals"), make_env_spec("white_circle", "jello"),
          make_env_spec("white_circle", "water")};
}

/// Zero-shot setting: unseen foods, unseen bowls, and both at once.
inline std::vector<EnvSpec> generalization_suite() {
  return {make_env_spec("white_circle", "rice"),           make_env_spec("white_circle", "bean_mix"),
          make_env_spec("white_circle", "milk"),           make_env_spec("large_blue_circle", "cereals"),
          make_env_spec("small_blue_circle", "jello"),     make_env_spec("transparent_square", "water"),
          make_env_spec("transparent_square", "rice")};
}

inline std::vector<EnvSpec> env_suite(std::string_view name) {
  if (name == "in_distribution") return in_distribution_suite();
  if (name == "generalization") return generalization_suite();
  throw ConfigError("unknown environment suite '" + std::string(name) + "'");
}

}  // namespace imrl
