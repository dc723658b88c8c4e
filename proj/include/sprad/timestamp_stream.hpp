// timestamp_stream.hpp -- ordered event times plus their binary/CSV formats.
//
// Binary layout: the 8 ASCII bytes "PHTSTRM1" followed by one little-endian
// unsigned 64-bit picosecond value per event. CSV layout: header `t_ns`, one
// row per event, nanoseconds with one decimal.
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sprad/errors.hpp"
#include "sprad/units.hpp"

namespace sprad {

/// Immutable, strictly increasing list of event times within [0, duration].
class TimestampStream {
 public:
  TimestampStream() = default;

  TimestampStream(std::vector<Picoseconds> times, Picoseconds duration, std::string origin = {})
      : times_(std::move(times)), duration_(duration), origin_(std::move(origin)) {
    if (duration_ < 0) throw ParameterError("duration", "must be non-negative");
    for (std::size_t i = 0; i < times_.size(); ++i) {
      if (times_[i] < 0 || times_[i] > duration_)
        throw ParameterError("times", "event " + std::to_string(i) + " outside [0, duration]");
      if (i > 0 && times_[i] <= times_[i - 1])
        throw ParameterError("times", "not strictly increasing at index " + std::to_string(i));
    }
  }

  std::span<const Picoseconds> times() const noexcept { return times_; }
  Picoseconds duration_ps() const noexcept { return duration_; }
  double duration() const noexcept { return to_seconds(duration_); }
  const std::string& origin() const noexcept { return origin_; }
  std::size_t size() const noexcept { return times_.size(); }
  bool empty() const noexcept { return times_.empty(); }

  /// Mean event rate over the stream duration (1/s).
  double rate() const noexcept {
    return duration_ > 0 ? static_cast<double>(times_.size()) / duration() : 0.0;
  }

  friend bool operator==(const TimestampStream&, const TimestampStream&) = default;

 private:
  std::vector<Picoseconds> times_;
  Picoseconds duration_ = 0;
  std::string origin_;
};

inline constexpr std::array<char, 8> kStreamMagic{'P', 'H', 'T', 'S', 'T', 'R', 'M', '1'};

inline void write_binary(std::ostream& out, const TimestampStream& stream) {
  out.write(kStreamMagic.data(), kStreamMagic.size());
  std::array<char, 8> buf{};
  for (Picoseconds t : stream.times()) {
    auto v = static_cast<std::uint64_t>(t);
    for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((v >> (8 * b)) & 0xffu);
    out.write(buf.data(), buf.size());
  }
}

/// Reads a binary stream. The format stores no duration; when `duration` is
/// absent the last event time is used.
inline TimestampStream read_binary(std::istream& in, std::optional<Picoseconds> duration = {},
                                   std::string origin = {}) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kStreamMagic)
    throw IoError("missing PHTSTRM1 header");
  std::vector<Picoseconds> times;
  std::array<unsigned char, 8> buf{};
  while (in.read(reinterpret_cast<char*>(buf.data()), buf.size())) {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
    times.push_back(static_cast<Picoseconds>(v));
  }
  if (in.gcount() != 0) throw IoError("truncated PHTSTRM1 record");
  Picoseconds d = duration.value_or(times.empty() ? 0 : times.back());
  return {std::move(times), d, std::move(origin)};
}

inline void write_csv(std::ostream& out, const TimestampStream& stream) {
  out << "t_ns\n";
  char line[32];
  for (Picoseconds t : stream.times()) {
    // tenths of a nanosecond, rounded half up
    const std::int64_t tenths = (t + 50) / 100;
    std::snprintf(line, sizeof line, "%lld.%lld\n", static_cast<long long>(tenths / 10),
                  static_cast<long long>(tenths % 10));
    out << line;
  }
}

/// Reads the CSV form. Rows that round onto an earlier row are rejected.
inline TimestampStream read_csv(std::istream& in, std::optional<Picoseconds> duration = {},
                                std::string origin = {}) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("t_ns", 0) != 0) throw IoError("missing t_ns header");
  std::vector<Picoseconds> times;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::istringstream row(line);
    double ns = 0;
    if (!(row >> ns)) throw IoError("bad t_ns row: " + line);
    times.push_back(static_cast<Picoseconds>(std::llround(ns * 10.0)) * 100);
  }
  Picoseconds d = duration.value_or(times.empty() ? 0 : times.back());
  return {std::move(times), d, std::move(origin)};
}

inline void save_binary(const std::filesystem::path& path, const TimestampStream& stream) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_binary(out, stream);
  if (!out) throw IoError("write failed: " + path.string());
}

inline TimestampStream load_binary(const std::filesystem::path& path,
                                   std::optional<Picoseconds> duration = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return read_binary(in, duration, path.stem().string());
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline void save_csv(const std::filesystem::path& path, const TimestampStream& stream) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_csv(out, stream);
}

}  // namespace sprad
