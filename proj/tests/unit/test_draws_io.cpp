#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "hanam/draws_io.hpp"
#include "hanam/errors.hpp"

using namespace hanam;

namespace {

std::string error_text(std::string_view text) {
  try {
    parse_draws(text, "d.csv");
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("parse a small draws file") {
  const std::string text =
      "2,1,2\n"
      "0.5\n"
      "-1\n"
      "0.25\n"
      "3e-3\n";
  auto d = parse_draws(text);
  REQUIRE(d.K() == 2);
  CHECK(d.n() == 2);
  CHECK(d.D() == 1);
  CHECK(d.draws[0](1, 0) == -1.0);
  CHECK(d.draws[1](1, 0) == 0.003);
  CHECK_FALSE(d.aligned);
}

TEST_CASE("malformed draws files name file, line and shape") {
  CHECK(error_text("").find("d.csv") != std::string::npos);
  CHECK(error_text("2,2\n").find("d.csv:1:") != std::string::npos);

  auto short_row = error_text("2,2,2\n1,2\n3\n");
  CHECK(short_row.find("d.csv:3:") != std::string::npos);
  CHECK(short_row.find("2 values") != std::string::npos);

  auto missing = error_text("2,1,2\n1\n2\n3\n");
  CHECK(missing.find("d.csv") != std::string::npos);

  CHECK(error_text("2,1,2\n1\n2\n3\n4\n5\n").find("d.csv:6:") != std::string::npos);
  CHECK(error_text("2,1,2\n1\nx\n3\n4\n").find("d.csv:3:") != std::string::npos);
  CHECK(error_text("2,1,1\n1\n2\n").find("K") != std::string::npos);
}

TEST_CASE("written draws re-read to the same values") {
  Rng rng(4);
  LatentDraws d;
  for (int k = 0; k < 3; ++k) d.draws.push_back(standard_normal_matrix(4, 2, rng) * 1e3);
  d.draws[1](2, 1) = 1.0 / 3.0;
  d.draws[2](0, 0) = -0.0;
  const auto text = write_draws_string(d);
  auto back = parse_draws(text);
  for (int k = 0; k < 3; ++k) CHECK(back.draws[k] == d.draws[k]);
  CHECK(write_draws_string(back) == text);
}

TEST_CASE("atomic write leaves no partial file") {
  const auto dir = std::filesystem::temp_directory_path() / "hanam_draws_io_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "out.txt";
  write_file_atomic(path, "hello\n");
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "hello");
  CHECK_THROWS_AS(write_file_atomic(dir / "missing" / "out.txt", "x"), Error);
  CHECK_FALSE(std::filesystem::exists(dir / "missing"));
  std::filesystem::remove_all(dir);
}
