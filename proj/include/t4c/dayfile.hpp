#pragma once

// One city-day of gridded traffic: a 20-byte little-endian header followed
// by T frames of H x W x C uint8 values (frame-major, channel-last).
// Static road-density maps use the same header with magic "T4CS", T = C = 1.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace t4c {

inline constexpr std::size_t kDayHeaderBytes = 20;
inline constexpr std::uint32_t kDayFileVersion = 1;

struct DayHeader {
  std::uint32_t version = kDayFileVersion;
  std::uint16_t city = 0;
  std::uint16_t year = 2019;
  std::uint8_t weekday = 0;
  std::uint16_t timesteps = 288;
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  std::uint8_t channels = 8;

  std::size_t frame_bytes() const { return std::size_t{height} * width * channels; }
  std::size_t payload_bytes() const { return frame_bytes() * timesteps; }
  bool operator==(const DayHeader&) const = default;
};

struct DayFile {
  DayHeader header;
  std::vector<std::uint8_t> payload;
};

/// Encode/decode a whole container; `magic` is "T4CD" or "T4CS".
std::vector<std::uint8_t> encode_day_file(const DayHeader& h, std::span<const std::uint8_t> payload,
                                          const char* magic = "T4CD");
DayFile decode_day_file(std::span<const std::uint8_t> bytes, const char* magic = "T4CD");

void write_day_file(const std::string& path, const DayHeader& h, std::span<const std::uint8_t> payload);
DayFile read_day_file(const std::string& path);

/// Random access to frame ranges of a day file without loading the payload.
class DayReader {
 public:
  explicit DayReader(const std::string& path, const char* magic = "T4CD");
  ~DayReader();
  DayReader(const DayReader&) = delete;
  DayReader& operator=(const DayReader&) = delete;

  const DayHeader& header() const noexcept { return header_; }
  const std::string& path() const noexcept { return path_; }
  /// Frames [start, start + count), each frame_bytes() long.
  std::vector<std::uint8_t> read_frames(int start, int count) const;
  /// Whole payload. With `drop_cache` the page cache for the file is evicted
  /// first (best effort), so the read comes from storage.
  std::vector<std::uint8_t> read_all(bool drop_cache = false) const;

 private:
  void pread_exact(std::uint8_t* dst, std::size_t n, std::size_t offset) const;

  std::string path_;
  int fd_ = -1;
  DayHeader header_;
};

/// Road-density map of one city; ocean cells are 0.
struct StaticMap {
  std::uint16_t city = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> density;
};
void write_static_map(const std::string& path, const StaticMap& m);
StaticMap read_static_map(const std::string& path);

}  // namespace t4c
