#include "t4c/generator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <random>

#include "t4c/error.hpp"
#include "t4c/loader.hpp"

namespace t4c {

const std::vector<CityProfile>& city_profiles() {
  static const std::vector<CityProfile> cities = {
      {"ANT", 0, 0.0079, 0.10}, {"BAN", 1, 0.0072, 0.05}, {"BAR", 2, 0.0023, 0.30},
      {"BER", 3, 0.0303, 0.00}, {"CHI", 4, 0.0085, 0.35}, {"IST", 5, 0.0481, 0.30},
      {"MEL", 6, 0.0039, 0.5347}, {"MOS", 7, 0.0758, 0.00},
  };
  return cities;
}

const CityProfile& city_profile(const std::string& name) {
  for (const auto& c : city_profiles()) {
    if (c.name == name) return c;
  }
  throw ConfigError("unknown city '" + name + "'");
}

void GeneratorConfig::validate() const {
  if (timesteps < 1 || timesteps > 65535) throw ConfigError("generator: timesteps out of range");
  if (height < 2 || width < 2 || height > 65535 || width > 65535) throw ConfigError("generator: grid size out of range");
  if (days < 0) throw ConfigError("generator: days must be >= 0");
  for (const auto& c : cities) {
    if (!(c.rate >= 0.0 && c.rate <= 1.0)) throw ConfigError("generator: rate of " + c.name + " outside [0, 1]");
    if (!(c.ocean >= 0.0 && c.ocean < 1.0)) throw ConfigError("generator: ocean fraction of " + c.name + " outside [0, 1)");
  }
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

constexpr double kMeanActivation = 0.7;
constexpr double kDiurnalAmplitude = 0.1;
constexpr int kDr[4] = {-1, 0, 1, 0};
constexpr int kDc[4] = {0, 1, 0, -1};

}  // namespace

CityWorld build_city_world(const CityProfile& profile, int height, int width, std::uint64_t seed) {
  CityWorld world;
  world.profile = profile;
  world.height = height;
  world.width = width;
  const int cells = height * width;
  std::mt19937_64 rng(mix(seed, profile.id));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Smooth elevation field from a few Gaussian bumps; the lowest cells become ocean.
  std::vector<double> field(cells, 0.0);
  for (int b = 0; b < 6; ++b) {
    const double ch = unit(rng) * height, cw = unit(rng) * width;
    const double sigma = (0.15 + 0.3 * unit(rng)) * std::max(height, width);
    const double amp = 0.5 + unit(rng);
    for (int h = 0; h < height; ++h) {
      for (int w = 0; w < width; ++w) {
        const double d2 = (h - ch) * (h - ch) + (w - cw) * (w - cw);
        field[h * width + w] += amp * std::exp(-d2 / (2 * sigma * sigma));
      }
    }
  }
  std::vector<std::int32_t> order(cells);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return field[a] < field[b]; });
  const int ocean_cells = static_cast<int>(std::lround(profile.ocean * cells));
  std::vector<char> land(cells, 1);
  for (int i = 0; i < ocean_cells; ++i) land[order[i]] = 0;
  const int land_cells = cells - ocean_cells;
  world.land_fraction = static_cast<double>(land_cells) / cells;
  if (profile.rate > world.land_fraction) {
    throw ConfigError("generator: rate " + std::to_string(profile.rate) + " of " + profile.name +
                      " exceeds its land fraction " + std::to_string(world.land_fraction));
  }

  const double active_cells = profile.rate * cells;
  int target = 0;
  if (active_cells > 0) {
    target = std::min(land_cells, std::max(1, static_cast<int>(std::ceil(active_cells / kMeanActivation))));
    world.activation = active_cells / target;
  }

  // Road skeleton: axis-aligned segments grown from existing road cells.
  std::vector<std::int16_t> head_of(cells, -1);
  std::vector<std::int32_t> land_list;
  for (int i = 0; i < cells; ++i) {
    if (land[i]) land_list.push_back(i);
  }
  auto random_land = [&] { return land_list[std::uniform_int_distribution<std::size_t>(0, land_list.size() - 1)(rng)]; };
  int cursor = target > 0 ? random_land() : 0;
  int stalls = 0;
  while (static_cast<int>(world.skeleton.size()) < target) {
    if (head_of[cursor] < 0 && stalls == 0) {
      head_of[cursor] = static_cast<std::int16_t>(std::uniform_int_distribution<int>(0, 3)(rng));
      world.skeleton.push_back(cursor);
      continue;
    }
    const int dir = std::uniform_int_distribution<int>(0, 3)(rng);
    const int len = std::uniform_int_distribution<int>(3, 12)(rng);
    int r = cursor / width, c = cursor % width;
    bool grew = false;
    for (int s = 0; s < len && static_cast<int>(world.skeleton.size()) < target; ++s) {
      const int nr = r + kDr[dir], nc = c + kDc[dir];
      if (nr < 0 || nr >= height || nc < 0 || nc >= width || !land[nr * width + nc]) break;
      r = nr;
      c = nc;
      const int cell = r * width + c;
      if (head_of[cell] < 0) {
        head_of[cell] = static_cast<std::int16_t>(dir);
        world.skeleton.push_back(cell);
        grew = true;
      }
    }
    stalls = grew ? 0 : stalls + 1;
    if (stalls > 64) {
      cursor = random_land();  // isolated patch: start a new component
      stalls = 0;
    } else {
      cursor = world.skeleton[std::uniform_int_distribution<std::size_t>(0, world.skeleton.size() - 1)(rng)];
    }
  }
  std::sort(world.skeleton.begin(), world.skeleton.end());
  for (auto cell : world.skeleton) world.heading.push_back(static_cast<std::uint8_t>(head_of[cell]));

  world.map.city = profile.id;
  world.map.height = height;
  world.map.width = width;
  world.map.density.assign(cells, 0);
  std::uniform_int_distribution<int> background(1, 40), road(120, 255);
  for (int i = 0; i < cells; ++i) {
    if (land[i]) world.map.density[i] = static_cast<std::uint8_t>(head_of[i] >= 0 ? road(rng) : background(rng));
  }
  return world;
}

DayFile generate_day(const CityWorld& world, int timesteps, int day, std::uint64_t seed) {
  DayFile f;
  f.header.city = world.profile.id;
  f.header.year = static_cast<std::uint16_t>(2019 + day % 2);
  f.header.weekday = static_cast<std::uint8_t>(day % 7);
  f.header.timesteps = static_cast<std::uint16_t>(timesteps);
  f.header.height = static_cast<std::uint16_t>(world.height);
  f.header.width = static_cast<std::uint16_t>(world.width);
  f.header.channels = 8;
  f.payload.assign(f.header.payload_bytes(), 0);

  std::mt19937_64 rng(mix(mix(seed, world.profile.id), 0x5eed0000ull + static_cast<std::uint64_t>(day)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double weekend = f.header.weekday >= 5 ? 0.75 : 1.0;
  const std::size_t frame = f.header.frame_bytes();
  for (int t = 0; t < timesteps; ++t) {
    const double phase = std::sin(2.0 * std::numbers::pi * t / timesteps - std::numbers::pi / 2);
    const double p = std::min(1.0, world.activation * (1.0 + kDiurnalAmplitude * phase));
    const double intensity = weekend * (0.6 + 0.4 * phase);
    std::uint8_t* out = f.payload.data() + frame * t;
    for (std::size_t i = 0; i < world.skeleton.size(); ++i) {
      if (unit(rng) >= p) continue;
      const int cell = world.skeleton[i];
      const int heading = world.heading[i];
      const double road = world.map.density[cell] / 255.0;
      const int volume = 1 + static_cast<int>(std::lround(120.0 * road * (0.5 + intensity) * unit(rng)));
      const int speed = 20 + static_cast<int>(std::lround(200.0 * (1.0 - 0.5 * intensity) * unit(rng)));
      out[cell * 8 + 2 * heading] = static_cast<std::uint8_t>(std::min(volume, 255));
      out[cell * 8 + 2 * heading + 1] = static_cast<std::uint8_t>(std::min(speed, 255));
    }
  }
  return f;
}

GeneratedCity generate_city(const GeneratorConfig& cfg, const CityProfile& city) {
  cfg.validate();
  const auto world = build_city_world(city, cfg.height, cfg.width, cfg.seed);
  GeneratedCity out{world.map, {}};
  for (int d = 0; d < cfg.days; ++d) out.days.push_back(generate_day(world, cfg.timesteps, d, cfg.seed));
  return out;
}

double payload_nnz_rate(const DayHeader& h, const std::vector<std::uint8_t>& payload) {
  const std::size_t sites = std::size_t{h.timesteps} * h.height * h.width;
  std::size_t nz = 0;
  for (std::size_t s = 0; s < sites; ++s) {
    const std::uint8_t* v = payload.data() + s * h.channels;
    nz += std::any_of(v, v + h.channels, [](std::uint8_t x) { return x != 0; });
  }
  return static_cast<double>(nz) / static_cast<double>(sites);
}

std::string write_corpus(const std::string& out_dir, const GeneratorConfig& cfg) {
  namespace fs = std::filesystem;
  cfg.validate();
  fs::create_directories(fs::path(out_dir) / "static");
  Manifest manifest;
  manifest.base_dir = out_dir;
  for (const auto& city : cfg.cities) {
    const auto world = build_city_world(city, cfg.height, cfg.width, cfg.seed);
    write_static_map((fs::path(out_dir) / "static" / (city.name + ".t4cs")).string(), world.map);
    for (int d = 0; d < cfg.days; ++d) {
      const auto day = generate_day(world, cfg.timesteps, d, cfg.seed);
      const fs::path rel = fs::path("corpus") / city.name / std::to_string(day.header.year) /
                           (std::to_string(day.header.weekday) + "_" + std::to_string(d) + ".t4cd");
      fs::create_directories(fs::path(out_dir) / rel.parent_path());
      write_day_file((fs::path(out_dir) / rel).string(), day.header, day.payload);
      manifest.files.push_back({rel.string(), city.name, city.id, day.header.year, day.header.weekday,
                                day.header.timesteps, day.header.height, day.header.width});
    }
  }
  const auto path = (fs::path(out_dir) / "manifest.tsv").string();
  manifest.save(path);
  return path;
}

}  // namespace t4c
