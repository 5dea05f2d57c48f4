#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "doctest.h"
#include "safa/data.hpp"
#include "safa/errors.hpp"
#include "safa/hash.hpp"

using namespace safa;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const char* name) {
  auto p = fs::temp_directory_path() / (std::string("safa_test_") + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& b, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(b, u);
}

}  // namespace

TEST_CASE("synthetic stream defaults") {
  SyntheticSpec spec;
  auto st = gen_synthetic_stream(spec, 0);
  CHECK(st.base.classes.size() == 10);
  REQUIRE(st.incremental.size() == 5);
  std::size_t total = st.base.classes.size();
  for (const auto& s : st.incremental) {
    CHECK(s.classes.size() == 2);
    CHECK(s.train.size() == 10);
    total += s.classes.size();
  }
  CHECK(total == 20);
  CHECK(st.seen_classes(5) == 20);
  CHECK(st.base.train.size() == 1000);
  CHECK(st.base.test.size() == 500);
  CHECK_NOTHROW(validate_stream(st));

  std::set<std::size_t> orig(st.original_class.begin(), st.original_class.end());
  CHECK(orig.size() == 20);

  auto again = gen_synthetic_stream(spec, 0);
  CHECK(again.data.train_x == st.data.train_x);
  CHECK(again.incremental[3].train == st.incremental[3].train);
  CHECK(gen_synthetic_stream(spec, 1).data.train_x != st.data.train_x);
}

TEST_CASE("synthetic noise scale") {
  SyntheticSpec spec;
  spec.sessions = 0;
  spec.classes = 10;
  RngStream rng(3, streams::kData);
  auto ds = gen_synthetic_dataset(spec, rng);
  // Per-class mean distance from the class centroid is close to stddev.
  double sq = 0.0;
  const auto D = spec.feature_dim;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    std::vector<double> mean(D, 0.0);
    for (std::size_t k = 0; k < spec.train_per_class; ++k)
      for (std::size_t d = 0; d < D; ++d) mean[d] += ds.train_x.at(c * spec.train_per_class + k, d);
    for (auto& m : mean) m /= spec.train_per_class;
    for (std::size_t k = 0; k < spec.train_per_class; ++k)
      for (std::size_t d = 0; d < D; ++d) {
        const double e = ds.train_x.at(c * spec.train_per_class + k, d) - mean[d];
        sq += e * e;
      }
  }
  CHECK(std::sqrt(sq / (spec.classes * spec.train_per_class)) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec s;
  s.classes = 19;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.shot = 500;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.stddev = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("splits of a 100-class dataset") {
  Dataset ds;
  ds.classes = 100;
  ds.train_x = Tensor({100 * 12, 3}, 0.5);
  ds.test_x = Tensor({100 * 2, 3}, 0.5);
  for (std::size_t c = 0; c < 100; ++c) {
    for (int k = 0; k < 12; ++k) ds.train_y.push_back(c);
    for (int k = 0; k < 2; ++k) ds.test_y.push_back(c);
  }
  RngStream rng(1, streams::kSplit);
  auto st = build_splits(ds, 60, 8, 5, 5, rng);
  CHECK(st.base.classes.size() == 60);
  CHECK(st.incremental.size() == 8);
  CHECK(st.seen_classes(8) == 100);
  CHECK_NOTHROW(validate_stream(st));

  RngStream r2(1, streams::kSplit);
  CHECK_THROWS_AS(build_splits(ds, 61, 8, 5, 5, r2), ConfigError);

  RngStream r3(1, streams::kSplit);
  auto ordered = build_splits(ds, 60, 8, 5, 5, r3, true);
  CHECK(ordered.original_class[61] == 61);

  SUBCASE("too few samples names the class") {
    Dataset thin = ds;
    thin.train_y.assign(thin.train_y.size(), 0);
    for (std::size_t c = 1; c < 100; ++c)
      for (int k = 0; k < 3; ++k) thin.train_y[c * 12 + k] = c;
    RngStream r4(1, streams::kSplit);
    try {
      build_splits(thin, 60, 8, 5, 5, r4, true);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("class 60") != std::string::npos);
    }
  }
}

TEST_CASE("protocol validation") {
  auto st = gen_synthetic_stream(SyntheticSpec{}, 2);
  auto dup = st;
  dup.incremental[2].classes[1] = dup.base.classes[0];
  CHECK_THROWS_AS(validate_stream(dup), ProtocolError);
  auto shots = st;
  shots.incremental[0].train.pop_back();
  CHECK_THROWS_AS(validate_stream(shots), ProtocolError);
  auto foreign = st;
  foreign.incremental[0].train[0] = st.base.train[0];
  CHECK_THROWS_AS(validate_stream(foreign), ProtocolError);
}

TEST_CASE("flat encoding round trip") {
  auto x = Tensor::matrix({{0.25, -1.5}, {3.0, 0.125}, {0.0, 7.5}});
  std::vector<std::size_t> y{2, 0, 1};
  auto bytes = encode_flat(x, y);
  Tensor bx;
  std::vector<std::size_t> by;
  decode_flat(bytes, bx, by);
  CHECK(bx == x);
  CHECK(by == y);
}

TEST_CASE("flat decoding of a hand-built file") {
  std::vector<std::uint8_t> b;
  const char magic[16] = "SAFASNN-DS";
  b.insert(b.end(), magic, magic + 16);
  put_u32(b, 1);
  put_u32(b, 2);
  put_u32(b, 3);
  put_u32(b, 4);
  put_u32(b, 7);
  for (float f : {1.0f, 0.5f, -2.0f}) put_f32(b, f);
  put_u32(b, 1);
  for (float f : {0.0f, 0.25f, 3.0f}) put_f32(b, f);
  const auto sum = fnv1a(b);
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(sum >> (8 * i)));

  Tensor x;
  std::vector<std::size_t> y;
  decode_flat(b, x, y);
  CHECK(y == std::vector<std::size_t>{7, 1});
  CHECK(x == Tensor::matrix({{1.0, 0.5, -2.0}, {0.0, 0.25, 3.0}}));
  CHECK(encode_flat(x, y) == b);

  auto flipped = b;
  flipped[40] ^= 0x10;
  CHECK_THROWS_AS(decode_flat(flipped, x, y), IntegrityError);
  auto cut = b;
  cut.resize(b.size() - 12);
  try {
    decode_flat(cut, x, y);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }
  auto magic_bad = b;
  magic_bad[0] = 'X';
  CHECK_THROWS_AS(decode_flat(magic_bad, x, y), FormatError);
}

TEST_CASE("flat dataset on disk") {
  const auto dir = scratch_dir("flat");
  SyntheticSpec spec;
  RngStream rng(4, streams::kData);
  auto ds = gen_synthetic_dataset(spec, rng);
  auto m = save_flat_dataset(dir / "syn.json", ds);
  CHECK(m.files == std::vector<std::string>{"syn.train.bin", "syn.test.bin"});
  CHECK(m.counts == std::vector<std::size_t>(20, 100));

  auto back = load_flat_dataset(dir / "syn.json");
  CHECK(back.train_y == ds.train_y);
  CHECK(back.classes == 20);
  double lo = 1.0, hi = 0.0;
  for (double v : back.train_x.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= 0.0);
  CHECK(hi <= 1.0);

  SUBCASE("unit-range data is loaded unchanged") {
    Dataset unit;
    unit.classes = 2;
    unit.train_x = Tensor::matrix({{0.25, 0.5}, {0.75, 1.0}});
    unit.train_y = {0, 1};
    unit.test_x = Tensor::matrix({{0.0, 0.5}});
    unit.test_y = {1};
    save_flat_dataset(dir / "unit.json", unit);
    CHECK(load_flat_dataset(dir / "unit.json").train_x == unit.train_x);
  }
  SUBCASE("corrupted sample file") {
    std::fstream f(dir / "syn.train.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    f.put('\x5a');
    f.close();
    CHECK_THROWS_AS(load_flat_dataset(dir / "syn.json"), IntegrityError);
  }
  SUBCASE("malformed manifest") {
    std::ofstream(dir / "bad.json") << "{\"name\": \"x\"}";
    CHECK_THROWS_AS(read_manifest(dir / "bad.json"), FormatError);
    CHECK_THROWS_AS(read_manifest(dir / "missing.json"), FormatError);
  }
  fs::remove_all(dir);
}
