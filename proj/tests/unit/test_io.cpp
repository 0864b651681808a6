#include <cstring>
#include <filesystem>
#include <random>

#include "altinc/error.hpp"
#include "altinc/io.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace altinc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "altinc_unit_io";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("probability maps round-trip bit for bit") {
  std::mt19937_64 rng(1);
  ProbMap p(oracle::random_probs(rng, 4, 5, 3));
  const auto path = scratch("p.altpm");
  io::save_probmap(path, p);
  CHECK(io::load_probmap(path) == p);
  const auto bytes = io::encode_probmap(p);
  CHECK(bytes.substr(0, 8) == io::kProbMapMagic);
  CHECK(bytes.size() == 8 + 3 * 8 + 4 * 5 * 3 * 8);
}

TEST_CASE("probability map guards") {
  std::mt19937_64 rng(2);
  const auto bytes = io::encode_probmap(ProbMap(oracle::random_probs(rng, 3, 2, 2)));
  CHECK_THROWS_AS(io::decode_probmap(bytes.substr(0, bytes.size() - 1)), FormatError);
  CHECK_THROWS_AS(io::decode_probmap(bytes.substr(0, 10)), FormatError);
  CHECK_THROWS_AS(io::decode_probmap(bytes + "x"), FormatError);
  auto bad = bytes;
  bad[3] = 'Z';
  CHECK_THROWS_AS(io::decode_probmap(bad), FormatError);

  Tensor t({2, 1, 2}, std::vector<double>{0.5, 0.3, 0.5, 0.6});  // second pixel sums to 0.9
  ProbMap ok(Tensor({2, 1, 2}, 0.5));
  auto raw = io::encode_probmap(ok);
  std::memcpy(raw.data() + 32, t.data(), 4 * sizeof(double));
  CHECK_THROWS_AS(io::decode_probmap(raw), FormatError);
  CHECK_THROWS_AS(ProbMap{t}, ValueError);
}

TEST_CASE("pgm and ppm round-trips") {
  std::mt19937_64 rng(3);
  auto labels = oracle::random_labels(rng, 7, 9, 6, 0.1);
  CHECK(io::decode_pgm(io::encode_pgm(labels)) == labels);
  const auto path = scratch("l.pgm");
  io::write_pgm(path, labels);
  CHECK(io::read_pgm(path) == labels);

  io::RgbImage img{2, 3, {}};
  for (std::uint8_t i = 0; i < 6; ++i) img.pixels.push_back({i, static_cast<std::uint8_t>(2 * i), 255});
  CHECK(io::decode_ppm(io::encode_ppm(img)) == img);
  CHECK_THROWS_AS(io::decode_ppm(io::encode_pgm(labels)), FormatError);
  CHECK_THROWS_AS(io::decode_pgm(io::encode_ppm(img)), FormatError);
}

TEST_CASE("parameter file round-trip and guards") {
  io::ParamFile f;
  f.config_hash = 0x1234abcd;
  f.records.push_back({"a", Tensor({2, 2}, std::vector<double>{1, -2, 3.5, 1e-300})});
  f.records.push_back({"bias", Tensor({1}, 0.25)});
  const auto bytes = io::encode_param_file(f);
  const auto back = io::decode_param_file(bytes);
  CHECK(back.config_hash == f.config_hash);
  CHECK(back.records == f.records);
  CHECK_THROWS_AS(io::decode_param_file(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(io::decode_param_file(io::encode_probmap(ProbMap(Tensor({2, 1, 1}, 0.5)))), FormatError);
  CHECK_THROWS_AS(io::decode_probmap(bytes), FormatError);
}

TEST_CASE("digests") {
  const auto a = scratch("d1");
  const auto b = scratch("d2");
  io::write_file(a, "hello");
  io::write_file(b, "hello");
  CHECK(io::file_digest(a) == io::file_digest(b));
  CHECK(io::file_digest(a).size() == 16);
  io::write_file(b, "hellp");
  CHECK(io::file_digest(a) != io::file_digest(b));
  CHECK(io::hex64(0xff) == "00000000000000ff");
}
