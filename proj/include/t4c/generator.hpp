#pragma once

// Synthetic traffic corpus: per city a land mask with a given ocean share,
// a connected road skeleton on land, and day files in which traffic shows
// up only on skeleton cells with a diurnal intensity cycle.

#include <cstdint>
#include <string>
#include <vector>

#include "t4c/dayfile.hpp"

namespace t4c {

struct CityProfile {
  std::string name;
  std::uint16_t id = 0;
  double rate = 0.0;   // target non-zero rate (any channel) per frame
  double ocean = 0.0;  // fraction of cells that are ocean
};

/// The eight reference cities, ids 0..7 in alphabetical order.
const std::vector<CityProfile>& city_profiles();
const CityProfile& city_profile(const std::string& name);

struct GeneratorConfig {
  std::vector<CityProfile> cities;
  int timesteps = 288;
  int height = 64;
  int width = 64;
  int days = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Static geometry of one generated city.
struct CityWorld {
  CityProfile profile;
  int height = 0;
  int width = 0;
  StaticMap map;
  std::vector<std::int32_t> skeleton;  // flat cell indices h * W + w
  std::vector<std::uint8_t> heading;   // per skeleton cell, 0..3
  double land_fraction = 1.0;
  double activation = 0.0;             // mean per-frame probability a skeleton cell carries traffic
};

/// Throws ConfigError when the rate cannot fit on the available land.
CityWorld build_city_world(const CityProfile& profile, int height, int width, std::uint64_t seed);

/// Day `day` of a city; deterministic in (world, seed, day).
DayFile generate_day(const CityWorld& world, int timesteps, int day, std::uint64_t seed);

struct GeneratedCity {
  StaticMap map;
  std::vector<DayFile> days;
};
GeneratedCity generate_city(const GeneratorConfig& cfg, const CityProfile& city);

/// Fraction of (t, h, w) cells of a payload with any non-zero channel.
double payload_nnz_rate(const DayHeader& h, const std::vector<std::uint8_t>& payload);

/// Writes corpus/<city>/<year>/<weekday>_<n>.t4cd, static/<city>.t4cs and
/// manifest.tsv under `out_dir`; returns the manifest path.
std::string write_corpus(const std::string& out_dir, const GeneratorConfig& cfg);

}  // namespace t4c
