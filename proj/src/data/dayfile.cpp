#include "t4c/dayfile.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "t4c/binary_io.hpp"

namespace t4c {
namespace {

void put_header(ByteWriter& w, const DayHeader& h, const char* magic) {
  w.magic({magic, 4});
  w.le(h.version);
  w.le(h.city);
  w.le(h.year);
  w.le(h.weekday);
  w.le(h.timesteps);
  w.le(h.height);
  w.le(h.width);
  w.le(h.channels);
}

DayHeader get_header(ByteReader& r, const char* magic) {
  r.expect_magic({magic, 4});
  DayHeader h;
  h.version = r.le<std::uint32_t>();
  if (h.version != kDayFileVersion) {
    throw FormatError("day file: unsupported version " + std::to_string(h.version), 4);
  }
  h.city = r.le<std::uint16_t>();
  h.year = r.le<std::uint16_t>();
  h.weekday = r.le<std::uint8_t>();
  h.timesteps = r.le<std::uint16_t>();
  h.height = r.le<std::uint16_t>();
  h.width = r.le<std::uint16_t>();
  h.channels = r.le<std::uint8_t>();
  if (h.weekday > 6) throw FormatError("day file: weekday " + std::to_string(h.weekday) + " out of range", 12);
  if (h.timesteps == 0 || h.height == 0 || h.width == 0 || h.channels == 0) {
    throw FormatError("day file: zero extent in header", 13);
  }
  return h;
}

std::string payload_mismatch(const DayHeader& h, std::size_t actual) {
  return "payload length mismatch: header implies " + std::to_string(h.payload_bytes()) + " bytes, found " +
         std::to_string(actual);
}

}  // namespace

std::vector<std::uint8_t> encode_day_file(const DayHeader& h, std::span<const std::uint8_t> payload,
                                          const char* magic) {
  if (payload.size() != h.payload_bytes()) throw std::invalid_argument("day file: " + payload_mismatch(h, payload.size()));
  ByteWriter w;
  w.buffer().reserve(kDayHeaderBytes + payload.size());
  put_header(w, h, magic);
  w.bytes(payload.data(), payload.size());
  return w.take();
}

DayFile decode_day_file(std::span<const std::uint8_t> bytes, const char* magic) {
  ByteReader r(bytes.data(), bytes.size(), "day file");
  DayFile f;
  f.header = get_header(r, magic);
  if (r.remaining() != f.header.payload_bytes()) {
    throw FormatError("day file: " + payload_mismatch(f.header, r.remaining()), kDayHeaderBytes);
  }
  const auto* p = r.take(r.remaining());
  f.payload.assign(p, p + f.header.payload_bytes());
  return f;
}

void write_day_file(const std::string& path, const DayHeader& h, std::span<const std::uint8_t> payload) {
  write_file_bytes(path, encode_day_file(h, payload));
}

DayFile read_day_file(const std::string& path) {
  DayReader reader(path);
  return DayFile{reader.header(), reader.read_all()};
}

DayReader::DayReader(const std::string& path, const char* magic) : path_(path) {
  fd_ = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd_ < 0) throw std::runtime_error("cannot open " + path + ": " + std::strerror(errno));
  try {
    std::uint8_t head[kDayHeaderBytes];
    const auto got = ::pread(fd_, head, sizeof head, 0);
    ByteReader r(head, got < 0 ? 0 : static_cast<std::size_t>(got), path);
    header_ = get_header(r, magic);
    const off_t size = ::lseek(fd_, 0, SEEK_END);
    const auto actual = static_cast<std::size_t>(size) - kDayHeaderBytes;
    if (actual != header_.payload_bytes()) {
      throw FormatError(path + ": " + payload_mismatch(header_, actual), kDayHeaderBytes);
    }
  } catch (...) {
    ::close(fd_);
    throw;
  }
}

DayReader::~DayReader() {
  if (fd_ >= 0) ::close(fd_);
}

void DayReader::pread_exact(std::uint8_t* dst, std::size_t n, std::size_t offset) const {
  std::size_t done = 0;
  while (done < n) {
    const auto got = ::pread(fd_, dst + done, n - done, static_cast<off_t>(offset + done));
    if (got < 0 && errno == EINTR) continue;
    if (got <= 0) {
      throw FormatError(path_ + ": read failed" + (got < 0 ? std::string(": ") + std::strerror(errno) : ""),
                        offset + done);
    }
    done += static_cast<std::size_t>(got);
  }
}

std::vector<std::uint8_t> DayReader::read_frames(int start, int count) const {
  if (start < 0 || count < 0 || start + count > header_.timesteps) {
    throw std::out_of_range(path_ + ": frames [" + std::to_string(start) + ", " + std::to_string(start + count) +
                            ") outside 0.." + std::to_string(header_.timesteps));
  }
  std::vector<std::uint8_t> out(header_.frame_bytes() * static_cast<std::size_t>(count));
  pread_exact(out.data(), out.size(), kDayHeaderBytes + header_.frame_bytes() * static_cast<std::size_t>(start));
  return out;
}

std::vector<std::uint8_t> DayReader::read_all(bool drop_cache) const {
  if (drop_cache) {
#ifdef POSIX_FADV_DONTNEED
    ::posix_fadvise(fd_, 0, 0, POSIX_FADV_DONTNEED);
#endif
  }
  std::vector<std::uint8_t> out(header_.payload_bytes());
  pread_exact(out.data(), out.size(), kDayHeaderBytes);
  return out;
}

void write_static_map(const std::string& path, const StaticMap& m) {
  DayHeader h;
  h.city = m.city;
  h.timesteps = 1;
  h.height = static_cast<std::uint16_t>(m.height);
  h.width = static_cast<std::uint16_t>(m.width);
  h.channels = 1;
  write_file_bytes(path, encode_day_file(h, m.density, "T4CS"));
}

StaticMap read_static_map(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  auto f = decode_day_file(bytes, "T4CS");
  if (f.header.timesteps != 1 || f.header.channels != 1) {
    throw FormatError(path + ": static map must have one frame and one channel", 13);
  }
  return StaticMap{f.header.city, f.header.height, f.header.width, std::move(f.payload)};
}

}  // namespace t4c
