#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fedgrid/csv.hpp"
#include "fedgrid/scenario.hpp"

using namespace fedgrid;

namespace {

std::filesystem::path temp_file(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "fedgrid_scenario_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("default scenario matches the tabulated day") {
  ScenarioDay day = default_scenario();
  day.validate();

  // hour 1
  CHECK(day.wind[0] == 51.48);
  CHECK(day.pv[0] == 0.00);
  CHECK(day.price_dpn[0] == 8.65);
  CHECK(day.price_mg[0] == 4.33);
  CHECK(day.load[0][0] == 457.70);
  // hour 12
  CHECK(day.wind[11] == 30.20);
  CHECK(day.pv[11] == 42.68);
  CHECK(day.price_dpn[11] == 20.70);
  CHECK(day.price_mg[11] == 10.35);
  // hour 20
  CHECK(day.load[0][19] == 557.20);
  CHECK(day.load[1][19] == 165.75);
  CHECK(day.load[2][19] == 187.07);
  // hour 24 (feeds the reset wraparound)
  CHECK(day.load[0][23] == 447.30);
  CHECK(day.price_dpn[23] == 8.87);
}

TEST_CASE("default device parameters match the reference MGs") {
  auto mgs = default_device_params();
  REQUIRE(mgs.size() == 3);

  CHECK(mgs[2].cg.a == 0.0095);
  CHECK(mgs[2].cg.b == 5.81);
  CHECK(mgs[2].cg.c == 108.0);
  CHECK(mgs[2].cg.p_max == 200.0);
  CHECK(mgs[1].cg.p_max == 280.0);
  for (const auto& mg : mgs) {
    CHECK(mg.ba.p_min == -50.0);
    CHECK(mg.ba.p_max == 50.0);
    mg.cg.validate();
    mg.ba.validate();
  }
}

TEST_CASE("sample_realization: zero noise is the identity") {
  ScenarioDay day = default_scenario();
  NoiseModel noise{0.0, 0.0, 42};
  ScenarioDay sampled = sample_realization(day, noise);
  CHECK(sampled.wind == day.wind);
  CHECK(sampled.pv == day.pv);
  CHECK(sampled.load == day.load);
  CHECK(sampled.price_dpn == day.price_dpn);
}

TEST_CASE("sample_realization is deterministic given the seed") {
  ScenarioDay day = default_scenario();
  NoiseModel noise;
  noise.seed = 1234;
  ScenarioDay a = sample_realization(day, noise);
  ScenarioDay b = sample_realization(day, noise);
  CHECK(a.wind == b.wind);
  CHECK(a.pv == b.pv);
  CHECK(a.load == b.load);

  noise.seed = 1235;
  ScenarioDay c = sample_realization(day, noise);
  CHECK(a.wind != c.wind);
}

TEST_CASE("sampled hour-1 wind follows the stated relative Gaussian") {
  ScenarioDay day = default_scenario();
  NoiseModel noise;
  const int n = 10000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    noise.seed = 1000 + i;
    double w = sample_realization(day, noise).wind[0];
    sum += w;
    sum_sq += w * w;
  }
  double mean = sum / n;
  double stddev = std::sqrt(sum_sq / n - mean * mean);
  CHECK(std::abs(mean - 51.48) / 51.48 < 0.01);
  double rel_std = stddev / 51.48;
  CHECK(rel_std > 0.14);
  CHECK(rel_std < 0.16);
}

TEST_CASE("high-noise samples never go negative") {
  ScenarioDay day = default_scenario();
  NoiseModel noise{2.0, 2.0, 0};
  int values_seen = 0;
  for (int i = 0; i < 900; ++i) {  // 900 days x (24*2 + 24*3) > 1e5 draws
    noise.seed = i;
    ScenarioDay s = sample_realization(day, noise);
    for (double v : s.wind) {
      CHECK(v >= 0.0);
      ++values_seen;
    }
    for (double v : s.pv) {
      CHECK(v >= 0.0);
      ++values_seen;
    }
    for (const auto& series : s.load) {
      for (double v : series) {
        CHECK(v >= 0.0);
        ++values_seen;
      }
    }
  }
  CHECK(values_seen >= 100000);
}

TEST_CASE("scenario CSV round trip is lossless") {
  auto path = temp_file("roundtrip.csv");
  ScenarioDay day = default_scenario();
  save_scenario(day, path.string());
  ScenarioDay loaded = load_scenario(path.string());
  CHECK(loaded.wind == day.wind);
  CHECK(loaded.pv == day.pv);
  CHECK(loaded.price_dpn == day.price_dpn);
  CHECK(loaded.price_mg == day.price_mg);
  CHECK(loaded.load == day.load);
}

TEST_CASE("scenario loading reports structured errors") {
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_scenario("/nonexistent/nowhere.csv"), ParseError);
  }

  SUBCASE("wrong row count is named") {
    auto path = temp_file("short.csv");
    ScenarioDay day = default_scenario();
    save_scenario(day, path.string());
    // chop the last data row
    std::ifstream in(path);
    std::string contents((std::istreambuf_iterator<char>(in)), {});
    in.close();
    contents.erase(contents.find_last_of('\n', contents.size() - 2) + 1);
    std::ofstream out(path);
    out << contents;
    out.close();

    try {
      load_scenario(path.string());
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("23") != std::string::npos);
    }
  }

  SUBCASE("price ordering violation cites the hour") {
    auto path = temp_file("price_order.csv");
    ScenarioDay day = default_scenario();
    day.price_mg[4] = day.price_dpn[4] + 1.0;  // hour 5
    CHECK_THROWS_AS(save_scenario(day, path.string()), ParseError);
    try {
      day.validate();
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("hour 5") != std::string::npos);
      CHECK(e.row() == 5);
    }
  }

  SUBCASE("negative power rejected") {
    ScenarioDay day = default_scenario();
    day.load[1][7] = -3.0;
    CHECK_THROWS_AS(day.validate(), ParseError);
  }

  SUBCASE("non-numeric cell names row and column") {
    auto path = temp_file("garbled.csv");
    ScenarioDay day = default_scenario();
    save_scenario(day, path.string());
    std::ifstream in(path);
    std::string contents((std::istreambuf_iterator<char>(in)), {});
    in.close();
    auto pos = contents.find("51.48");
    contents.replace(pos, 5, "oops!");
    std::ofstream out(path);
    out << contents;
    out.close();
    CHECK_THROWS_AS(load_scenario(path.string()), ParseError);
  }
}

TEST_CASE("config documents round trip through JSON") {
  MmgConfig config;
  config.w_deviation = 0.5;
  config.ppo.episodes_per_epoch = 2;
  config.schedule.total_epochs = 60;
  config.schedule.local_epochs_per_round = 20;
  config.schedule.mode = AggregationMode::kDataWeighted;

  auto path = temp_file("config.json");
  std::ofstream out(path);
  out << "// tuned-down config for tests\n" << config_to_json(config);
  out.close();

  MmgConfig loaded = load_config(path.string());
  CHECK(loaded.w_deviation == 0.5);
  CHECK(loaded.ppo.episodes_per_epoch == 2);
  CHECK(loaded.schedule.total_epochs == 60);
  CHECK(loaded.schedule.rounds() == 3);
  CHECK(loaded.schedule.mode == AggregationMode::kDataWeighted);
  CHECK(loaded.devices.size() == 3);
  CHECK(loaded.devices[1].cg.p_max == 280.0);
}

TEST_CASE("schedule arithmetic allows a partial last round") {
  FedSchedule s;
  s.total_epochs = 1500;
  s.local_epochs_per_round = 500;
  CHECK(s.rounds() == 3);
  CHECK(s.epochs_in_round(2) == 500);

  s.total_epochs = 1200;
  CHECK(s.rounds() == 3);
  CHECK(s.epochs_in_round(0) == 500);
  CHECK(s.epochs_in_round(2) == 200);
}
