#include <gtest/gtest.h>

#include <sstream>

#include "sprad/random.hpp"
#include "sprad/timestamp_stream.hpp"
#include "sprad/units.hpp"

using namespace sprad;

TEST(Units, PhotonEnergyAtRubyLine) {
  // h c / lambda by hand
  const double e = 6.62607015e-34 * 299792458.0 / 784.7e-9;
  EXPECT_DOUBLE_EQ(photon_energy(784.7e-9), e);
  EXPECT_EQ(to_ps(1e-6), 1000000);
  EXPECT_EQ(to_ps(0.4e-9), 400);
  EXPECT_DOUBLE_EQ(to_seconds(2500), 2.5e-9);
}

TEST(Random, Uniform01StaysInHalfOpenInterval) {
  Engine rng = make_engine(1, 0);
  for (int i = 0; i < 100000; ++i) {
    const double u = uniform01(rng);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Random, StreamsAreIndependentAndReproducible) {
  Engine a = make_engine(42, 1), b = make_engine(42, 1), c = make_engine(42, 2);
  EXPECT_EQ(a(), b());
  Engine a2 = make_engine(42, 1);
  EXPECT_NE(a2(), c());
}

TEST(TimestampStream, RejectsUnsortedAndOutOfRange) {
  EXPECT_THROW(TimestampStream({5, 5}, 10), ParameterError);
  EXPECT_THROW(TimestampStream({5, 3}, 10), ParameterError);
  EXPECT_THROW(TimestampStream({11}, 10), ParameterError);
  EXPECT_THROW(TimestampStream({-1}, 10), ParameterError);
  EXPECT_NO_THROW(TimestampStream({0, 10}, 10));
}

TEST(TimestampStream, Rate) {
  TimestampStream s({1, 2, 3}, to_ps(1e-6));
  EXPECT_DOUBLE_EQ(s.rate(), 3e6);
}

TEST(TimestampStream, BinaryRoundTrip) {
  TimestampStream s({0, 1, 400, 1234567890123LL}, 1234567890124LL, "x");
  std::stringstream buf;
  write_binary(buf, s);
  const std::string bytes = buf.str();
  ASSERT_EQ(bytes.size(), 8u + 4u * 8u);
  EXPECT_EQ(bytes.substr(0, 8), "PHTSTRM1");
  // little-endian u64 after the magic
  EXPECT_EQ(static_cast<unsigned char>(bytes[8 + 8 * 2]), 400 & 0xff);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8 + 8 * 2 + 1]), 400 >> 8);

  std::stringstream in(bytes);
  const TimestampStream back = read_binary(in, s.duration_ps(), "x");
  EXPECT_EQ(back, s);
}

TEST(TimestampStream, BinaryDurationDefaultsToLastEvent) {
  TimestampStream s({3, 9}, 100);
  std::stringstream buf;
  write_binary(buf, s);
  EXPECT_EQ(read_binary(buf).duration_ps(), 9);
}

TEST(TimestampStream, BinaryRejectsBadMagicAndTruncation) {
  std::stringstream bad("NOTMAGIC");
  EXPECT_THROW(read_binary(bad), IoError);
  TimestampStream s({3, 9}, 100);
  std::stringstream buf;
  write_binary(buf, s);
  std::stringstream cut(buf.str().substr(0, buf.str().size() - 3));
  EXPECT_THROW(read_binary(cut), IoError);
}

TEST(TimestampStream, CsvRoundTripAtTenthNanosecond) {
  TimestampStream s({100, 2500, 1000000}, 2000000);
  std::stringstream buf;
  write_csv(buf, s);
  EXPECT_EQ(buf.str(), "t_ns\n0.1\n2.5\n1000.0\n");
  const TimestampStream back = read_csv(buf, s.duration_ps());
  EXPECT_EQ(back.times().size(), 3u);
  EXPECT_EQ(back.times()[1], 2500);
}
