#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "usagewatch/report.hpp"
#include "usagewatch/synth.hpp"

using namespace usagewatch;

namespace {

Date day(const char* text) { return *Date::parse(text); }

UsageTable flat_table(double level = 1000.0, int days = 10) {
  UsageTable table;
  const Date start = day("2015-01-01");
  for (int d = 0; d < days; ++d) {
    table.insert(start + d, "aa", level);
    table.insert(start + d, "bb", level / 2);
  }
  return table;
}

}  // namespace

TEST_CASE("injection ramps linearly and holds the plateau") {
  InjectionSpec spec;
  spec.country = "aa";
  spec.start = day("2015-01-02");
  spec.ramp_days = 2;
  spec.hold_days = 1;
  spec.magnitude = 0.5;

  const auto injected = inject(flat_table(), spec);
  CHECK(*injected.lookup(day("2015-01-01"), "aa") == 1000.0);
  CHECK(*injected.lookup(day("2015-01-02"), "aa") == 1250.0);
  CHECK(*injected.lookup(day("2015-01-03"), "aa") == 1500.0);
  CHECK(*injected.lookup(day("2015-01-04"), "aa") == 1500.0);
  CHECK(*injected.lookup(day("2015-01-05"), "aa") == 1000.0);
  // the other country is untouched
  CHECK(*injected.lookup(day("2015-01-03"), "bb") == 500.0);
}

TEST_CASE("a full negative plateau drives usage to zero") {
  InjectionSpec spec;
  spec.country = "aa";
  spec.start = day("2015-01-03");
  spec.ramp_days = 2;
  spec.hold_days = 2;
  spec.magnitude = -1.0;
  const auto injected = inject(flat_table(), spec);
  CHECK(*injected.lookup(day("2015-01-04"), "aa") == 0.0);  // end of ramp
  CHECK(*injected.lookup(day("2015-01-05"), "aa") == 0.0);  // plateau
  CHECK(*injected.lookup(day("2015-01-06"), "aa") == 0.0);
}

TEST_CASE("zero magnitude injection is the identity") {
  InjectionSpec spec;
  spec.country = "aa";
  spec.start = day("2015-01-02");
  spec.ramp_days = 3;
  spec.hold_days = 2;
  spec.magnitude = 0.0;
  const auto table = flat_table();
  const auto injected = inject(table, spec);
  CHECK(injected.by_country() == table.by_country());
}

TEST_CASE("injection is invertible through the multiplier schedule") {
  Rng rng(55);
  BaselineOptions options;
  options.countries = 4;
  options.days = 60;
  const auto table = make_correlated_baseline(options, 9);
  for (int trial = 0; trial < 10; ++trial) {
    InjectionSpec spec;
    spec.country = "ab";
    spec.ramp_days = static_cast<int>(rng.uniform_int(1, 10));
    spec.hold_days = static_cast<int>(rng.uniform_int(0, 10));
    spec.magnitude = rng.uniform(-0.9, 0.9);
    spec.start = options.start + rng.uniform_int(0, 60 - spec.active_days());
    const auto injected = inject(table, spec);
    for (const auto& [date, users] : injected.by_country().at("ab")) {
      const double recovered = users / injection_multiplier(spec, date);
      CHECK(recovered == Catch::Approx(*table.lookup(date, "ab")).margin(1e-9));
    }
  }
}

TEST_CASE("injection validates its window and target") {
  InjectionSpec spec;
  spec.country = "cc";
  spec.start = day("2015-01-02");
  CHECK_THROWS_AS(inject(flat_table(), spec), ParameterError);

  spec.country = "aa";
  spec.start = day("2015-01-09");
  spec.ramp_days = 5;
  CHECK_THROWS_AS(inject(flat_table(), spec), ParameterError);

  spec.start = day("2015-01-02");
  spec.magnitude = 1.5;
  CHECK_THROWS_AS(inject(flat_table(), spec), ParameterError);
}

TEST_CASE("judge_detection requires strictly more than half the active days") {
  InjectionSpec spec;
  spec.country = "aa";
  spec.start = day("2015-03-01");
  spec.ramp_days = 6;
  spec.hold_days = 4;  // 10 active days

  auto flags_for = [&](int count) {
    std::vector<AnomalyFlag> flags;
    for (int i = 0; i < count; ++i) {
      flags.push_back({spec.start + i, "aa", AnomalyClass::kDrop, 1.0, -0.5, 0.5});
    }
    return flags;
  };

  CHECK(judge_detection(flags_for(6), spec));
  CHECK_FALSE(judge_detection(flags_for(5), spec));  // exactly half is not enough
  CHECK_FALSE(judge_detection(flags_for(0), spec));

  // flags for other countries or outside the window do not count
  std::vector<AnomalyFlag> noise = flags_for(5);
  noise.push_back({spec.start + 2, "bb", AnomalyClass::kDrop, 1.0, -0.5, 0.5});
  noise.push_back({spec.start + 40, "aa", AnomalyClass::kDrop, 1.0, -0.5, 0.5});
  noise.push_back({spec.start - 1, "aa", AnomalyClass::kDrop, 1.0, -0.5, 0.5});
  CHECK_FALSE(judge_detection(noise, spec));

  // duplicate flags on one day still count that day once
  auto duplicated = flags_for(6);
  duplicated.push_back({spec.start, "aa", AnomalyClass::kIncrease, -1.0, -0.5, 0.5});
  CHECK(judge_detection(duplicated, spec));
}

TEST_CASE("the synthetic baseline is reproducible and well-formed") {
  BaselineOptions options;
  options.countries = 6;
  options.days = 50;
  const auto a = make_correlated_baseline(options, 77);
  const auto b = make_correlated_baseline(options, 77);
  CHECK(serialize_userstats(a) == serialize_userstats(b));
  const auto c = make_correlated_baseline(options, 78);
  CHECK(serialize_userstats(a) != serialize_userstats(c));

  CHECK(a.country_count() == 6);
  CHECK(a.size() == 6 * 50);
  for (const auto& [country, series] : a.by_country()) {
    for (const auto& [date, users] : series) {
      CHECK(users >= 0.0);
      CHECK(std::isfinite(users));
    }
  }
}

namespace {

// Shared experiment fixture: a 16-country panel with five latent factors and
// the matching five-component detector.
struct ExperimentFixture {
  BaselineOptions options;
  UsageTable table;
  DetectorParams params;
  std::vector<std::string> clean;  // countries quiet over the injection period

  ExperimentFixture() {
    options.countries = 16;
    options.days = 320;
    options.shared_factors = 5;
    table = make_correlated_baseline(options, 11);
    params.window = 180;
    params.components = ComponentPolicy::fixed(5);
    params.min_history = 20;
    const auto probe = run_detector(assemble_matrix(table, 7), params, 2);
    clean = countries_without_flags(probe.flags, injection_from(), injection_to() + 40,
                                    probe.series.countries);
  }

  Date injection_from() const { return options.start + 210; }
  Date injection_to() const { return options.start + 270; }
};

const ExperimentFixture& fixture() {
  static ExperimentFixture shared;
  return shared;
}

}  // namespace

TEST_CASE("experiments are reproducible from the seed") {
  const auto& fx = fixture();
  REQUIRE_FALSE(fx.clean.empty());

  ExperimentGrid grid;
  grid.country = fx.clean.front();
  grid.start_from = fx.injection_from();
  grid.start_to = fx.injection_to();
  grid.magnitudes = {-0.6, 0.6};
  grid.ramp_min = 5;
  grid.ramp_max = 12;

  const auto a = run_experiment(fx.table, fx.params, grid, 16, 42, 2);
  const auto b = run_experiment(fx.table, fx.params, grid, 16, 42, 1);
  const Meta meta{{"probe", "determinism"}};
  CHECK(rates_csv(a, meta) == rates_csv(b, meta));
  REQUIRE(a.buckets.size() == 2);
  CHECK(a.buckets[0].runs + a.buckets[1].runs == 16);
  CHECK(a.total_runs == 16);

  const auto c = run_experiment(fx.table, fx.params, grid, 16, 43, 2);
  // different seed draws different ramps/starts; rates may coincide but the
  // report should still be structurally valid
  CHECK(c.total_runs == 16);
}

TEST_CASE("detection rates grow with magnitude") {
  const auto& fx = fixture();
  REQUIRE_FALSE(fx.clean.empty());

  ExperimentGrid grid;
  grid.country = fx.clean.front();
  grid.start_from = fx.injection_from();
  grid.start_to = fx.injection_to();
  grid.magnitudes = {-0.7, -0.35, -0.05, 0.05, 0.35, 0.7};
  grid.ramp_min = 5;
  grid.ramp_max = 15;

  const auto report = run_experiment(fx.table, fx.params, grid, 240, 1234, 2);
  REQUIRE(report.buckets.size() == 6);
  auto rate_of = [&](double magnitude) {
    for (const auto& b : report.buckets) {
      if (b.magnitude == magnitude) return b.rate();
    }
    FAIL("bucket not found");
    return 0.0;
  };
  // non-decreasing in |magnitude| per sign, with 2pp slack
  CHECK(rate_of(-0.35) >= rate_of(-0.05) - 0.02);
  CHECK(rate_of(-0.7) >= rate_of(-0.35) - 0.02);
  CHECK(rate_of(0.35) >= rate_of(0.05) - 0.02);
  CHECK(rate_of(0.7) >= rate_of(0.35) - 0.02);
  // large anomalies are reliably caught on this quiet baseline
  CHECK(rate_of(0.7) > 0.8);
  CHECK(rate_of(-0.7) > 0.8);
}

TEST_CASE("an anomalous baseline is rejected for experiments") {
  const auto& fx = fixture();
  REQUIRE_FALSE(fx.clean.empty());

  // plant a real anomaly inside the experiment period
  InjectionSpec planted;
  planted.country = fx.clean.front();
  planted.start = fx.injection_from() + 20;
  planted.ramp_days = 8;
  planted.hold_days = 8;
  planted.magnitude = -0.7;
  const auto table = inject(fx.table, planted);

  ExperimentGrid grid;
  grid.country = planted.country;
  grid.start_from = fx.injection_from();
  grid.start_to = fx.injection_to();
  grid.magnitudes = {0.5};
  grid.ramp_min = 5;
  grid.ramp_max = 10;

  CHECK_THROWS_AS(run_experiment(table, fx.params, grid, 4, 1), InvalidBaselineError);
}

TEST_CASE("experiment validation catches impossible setups") {
  const auto& fx = fixture();
  const auto& table = fx.table;
  const auto& params = fx.params;

  ExperimentGrid grid;
  grid.country = "aa";
  grid.start_from = fx.options.start + 20;  // inside the warm-up
  grid.start_to = fx.options.start + 30;
  grid.magnitudes = {0.5};
  CHECK_THROWS_AS(run_experiment(table, params, grid, 4, 1), ParameterError);

  grid.start_from = fx.options.start + 310;  // not enough trailing days
  grid.start_to = fx.options.start + 315;
  CHECK_THROWS_AS(run_experiment(table, params, grid, 4, 1), ParameterError);

  grid.start_from = fx.injection_from();
  grid.start_to = fx.injection_to();
  grid.magnitudes = {};
  CHECK_THROWS_AS(run_experiment(table, params, grid, 4, 1), ParameterError);

  grid.magnitudes = {0.5};
  grid.country = "zz";  // not in the table
  CHECK_THROWS_AS(run_experiment(table, params, grid, 4, 1), ParameterError);
}

TEST_CASE("countries_without_flags filters exactly the noisy ones") {
  std::vector<AnomalyFlag> flags;
  flags.push_back({day("2015-03-01"), "aa", AnomalyClass::kDrop, 1.0, -1, 1});
  flags.push_back({day("2015-06-01"), "bb", AnomalyClass::kDrop, 1.0, -1, 1});
  const auto clean = countries_without_flags(flags, day("2015-02-01"), day("2015-04-01"),
                                             {"aa", "bb", "cc"});
  CHECK(clean == std::vector<std::string>{"bb", "cc"});
}
