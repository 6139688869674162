#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "mvlab/errors.hpp"
#include "mvlab/io.hpp"

using namespace mvlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mvlab_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Io, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) EXPECT_EQ(std::stod(io::format_double(v)), v);
  EXPECT_EQ(io::format_double(0.5), "0.5");
  EXPECT_THROW(io::format_double(std::nan("")), numerical_error);
  EXPECT_EQ(io::format_optional(std::nullopt), "");
  EXPECT_TRUE(io::json_number(std::nullopt).is_null());
  EXPECT_TRUE(io::json_number(std::numeric_limits<double>::infinity()).is_null());
}

TEST(Io, CsvQuotingRfc4180) {
  EXPECT_EQ(io::csv_field("plain"), "plain");
  EXPECT_EQ(io::csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(io::csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  const std::vector<std::string> row{"1", "x,y", ""};
  EXPECT_EQ(io::csv_row(row), "1,\"x,y\",\r\n");
}

TEST(Io, AtomicWriteLeavesNoTemporary) {
  const auto dir = scratch("atomic");
  io::atomic_write(dir / "a.txt", "first");
  io::atomic_write(dir / "a.txt", "second");
  EXPECT_EQ(slurp(dir / "a.txt"), "second");
  EXPECT_FALSE(fs::exists(dir / "a.txt.tmp"));
}

TEST(Io, JsonRoundTrip) {
  const auto dir = scratch("json");
  const nlohmann::json j{{"b", 1.0 / 3.0}, {"a", {1, 2}}, {"n", nullptr}};
  io::write_json(dir / "x.json", j);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "x.json")), j);
}

TEST(Io, FramesRoundTrip) {
  const auto dir = scratch("frames");
  const std::vector<double> data{0.0, 0.25, 1.0 / 3.0, 0.999, -0.0, 1e-300};
  io::write_frames(dir / "s", data, 3, 2, 77, {{"note", "x"}});
  EXPECT_EQ(fs::file_size(dir / "s.bin"), 48u);
  const auto d = io::read_frames(dir / "s");
  EXPECT_EQ(d.frames, 3u);
  EXPECT_EQ(d.record_length, 2u);
  EXPECT_EQ(d.seed, 77u);
  EXPECT_EQ(d.data, data);
  EXPECT_THROW(io::write_frames(dir / "t", data, 4, 2, 1), validation_error);
}
