#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "kalbucy/harness/csv.hpp"

namespace kalbucy::harness {
namespace {

TEST(FormatReal, SeventeenSignificantDigitsRoundTrip) {
  EXPECT_EQ(format_real(0.1), "0.10000000000000001");
  EXPECT_EQ(format_real(1.0), "1");
  EXPECT_EQ(format_real(-2.5), "-2.5");
  for (double v : {M_PI, 1e-300, 6.02214076e23, -1.0 / 3.0}) {
    EXPECT_EQ(std::strtod(format_real(v).c_str(), nullptr), v);
  }
  EXPECT_EQ(format_real(std::numeric_limits<double>::quiet_NaN()), "nan");
  EXPECT_EQ(format_real(std::numeric_limits<double>::infinity()), "inf");
}

TEST(CsvTable, WritesMetadataHeaderAndRows) {
  CsvTable t({"a", "b"});
  t.add_metadata("seed", "7");
  t.add_row({"1", "x"});
  t.add_row({"2", "y"});
  EXPECT_EQ(t.str(), "# seed: 7\na,b\n1,x\n2,y\n");
  EXPECT_EQ(t.column("b"), 1u);
  EXPECT_THROW((void)t.column("c"), std::out_of_range);
}

TEST(CsvTable, RejectsMalformedRows) {
  CsvTable t({"a", "b"});
  EXPECT_THROW(t.add_row({"1"}), std::invalid_argument);
  EXPECT_THROW(t.add_row({"1,2", "3"}), std::invalid_argument);
  EXPECT_THROW(t.add_row({"1\n", "3"}), std::invalid_argument);
  EXPECT_THROW(CsvTable({}), std::invalid_argument);
}

TEST(CsvTable, WritesFile) {
  const auto dir = std::filesystem::temp_directory_path() / "kalbucy_csv_test";
  std::filesystem::create_directories(dir);
  CsvTable t({"x"});
  t.add_row({"3"});
  const auto path = dir / "out.csv";
  write_csv_file(t, path.string());
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), "x\n3\n");
  std::filesystem::remove_all(dir);
  EXPECT_THROW(write_csv_file(t, (dir / "missing" / "out.csv").string()), std::runtime_error);
}

}  // namespace
}  // namespace kalbucy::harness
