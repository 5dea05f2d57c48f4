#include <sstream>
#include <vector>

#include "doctest.h"
#include "safa/energy.hpp"
#include "safa/errors.hpp"

using namespace safa;

TEST_CASE("flop counts") {
  CHECK(flops_of_dense(16, 8) == 128);
  CHECK(flops_of_dense(1, 1) == 1);
  CHECK(flops_of_conv2d(1, 1, 1, 1, 1, 1, 0) == 1);
  CHECK(flops_of_conv2d(4, 4, 1, 2, 3, 1, 0) == 72);
  CHECK(flops_of_conv2d(4, 4, 1, 1, 3, 1, 1) == 16 * 9);
  CHECK(flops_of_conv2d(5, 5, 1, 1, 3, 2, 0) == 4 * 9);
  CHECK_THROWS_AS(flops_of_conv2d(2, 2, 1, 1, 3, 1, 0), DimensionError);
  CHECK_THROWS_AS(flops_of_dense(0, 4), DimensionError);
}

TEST_CASE("synaptic operations") {
  LayerCostProfile p{"fc", LayerKind::dense, 1000.0, 0.2, 4};
  CHECK(sops(p) == doctest::Approx(800.0).epsilon(1e-15));
  p.zeta = 0.0;
  CHECK(sops(p) == 0.0);
}

TEST_CASE("energy report") {
  std::vector<LayerCostProfile> one{{"fc", LayerKind::dense, 1000.0, 0.2, 4}};
  auto r = energy_report(one);
  CHECK(r.total_snn_pj == 720.0);
  CHECK(r.total_ann_pj == 4600.0);
  CHECK(r.layers[0].snn_cheaper);
  CHECK(r.total_snn_j() == doctest::Approx(720e-12));

  std::vector<LayerCostProfile> even{{"fc", LayerKind::dense, 900.0, 4.6 / 0.9 / 8.0, 8}};
  CHECK(energy_report(even).layers[0].ratio == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<LayerCostProfile> above{{"fc", LayerKind::dense, 900.0, 0.7, 8}};
  CHECK_FALSE(energy_report(above).layers[0].snn_cheaper);

  CHECK_THROWS_AS(energy_report(std::vector<LayerCostProfile>{}), FormatError);
  CHECK_THROWS_AS(energy_report(one, EnergyConstants{0.0, 0.9}), ConfigError);
  std::vector<LayerCostProfile> bad{{"fc", LayerKind::dense, 10.0, 1.5, 4}};
  CHECK_THROWS_AS(energy_report(bad), FormatError);
}

TEST_CASE("profile csv") {
  std::vector<LayerCostProfile> ps{{"conv1", LayerKind::conv2d, 72.0, 0.125, 4}, {"fc", LayerKind::dense, 128.0, 0.5, 2}};
  std::stringstream ss;
  write_profile_csv(ss, ps);
  auto back = read_profile_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].layer == "conv1");
  CHECK(back[0].kind == LayerKind::conv2d);
  CHECK(back[1].flops == 128.0);
  CHECK(back[1].zeta == 0.5);
  CHECK(back[1].timesteps == 2);

  std::istringstream empty("");
  CHECK_THROWS_AS(read_profile_csv(empty), FormatError);
  std::istringstream header_only("layer,kind,flops,zeta,timesteps\n");
  CHECK_THROWS_AS(read_profile_csv(header_only), FormatError);
  std::istringstream bad("layer,kind,flops,zeta,timesteps\nfc,dense,10,0.2,4\nfc2,dense,abc,0.2,4\n");
  try {
    read_profile_csv(bad);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  std::istringstream kind("layer,kind,flops,zeta,timesteps\nfc,lstm,10,0.2,4\n");
  CHECK_THROWS_AS(read_profile_csv(kind), FormatError);
}
