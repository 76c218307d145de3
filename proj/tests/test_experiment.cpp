#include <doctest.h>

#include "grbf/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace grbf;

namespace {

const char* kSmallConfig = R"({
  "manifold": "ellipse1d",
  "mode": "random",
  "methods": ["gmls", "grbffd", "rbffd"],
  "N": [200, 400],
  "trials": 2,
  "seed_base": 11,
  "K_policy": {"type": "fixed", "K": 20},
  "output_dir": "unused"
})";

std::string error_of(const std::string& text) {
  try {
    parse_experiment_config(text, "cfg.json");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string without_wall_time(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

}  // namespace

TEST_CASE("method specs") {
  CHECK(MethodSpec::parse("gmls").name() == "gmls:one_over_k");
  CHECK(MethodSpec::parse("gmls:smooth").weight == WeightScheme::smooth);
  CHECK(MethodSpec::parse("rbffd").weight == WeightScheme::phi_inverse);
  CHECK(MethodSpec::parse("grbffd").name() == "grbffd");
  CHECK_THROWS_AS(MethodSpec::parse("grbffd:smooth"), UnsupportedModeError);
  CHECK_THROWS_AS(MethodSpec::parse("gmls:cubic"), ConfigError);
}

TEST_CASE("config parsing") {
  const ExperimentConfig c = parse_experiment_config(kSmallConfig);
  CHECK(c.methods.size() == 3);
  CHECK(c.Ns == std::vector<Index>{200, 400});
  CHECK(c.seed(1) == 12);
  CHECK_FALSE(c.k_policy.auto_tune);
  CHECK(c.k_policy.describe() == "fixed:K=20");
  CHECK(c.method_config(c.methods[1]).k0 == 20);
}

TEST_CASE("config errors carry line and column") {
  CHECK(error_of("{\n  \"manifold\": \"ellipse1d\",\n  \"methods\": [],\n  \"N\": [400]\n}").rfind("cfg.json:3:", 0) == 0);
  CHECK(error_of("{\"manifold\": \"ellipse1d\", \"methods\": [\"gmls\"], \"N\": [400],\n \"colour\": 1}")
            .rfind("cfg.json:2:", 0) == 0);
  CHECK(error_of("{\"manifold\": \"ellipse1d\",\n\"methods\": [\"gmls\",\n \"fem\"], \"N\": [400]}").rfind("cfg.json:3:", 0) ==
        0);
  CHECK(error_of("{\"manifold\": \"torus\", \"methods\": [\"gmls\"], \"N\": [400]}").find("unknown manifold") !=
        std::string::npos);
  CHECK(error_of("{\"manifold\": \"ellipse1d\",\n \"methods\": [\"gmls\"],\n \"N\": [400, -3]}").rfind("cfg.json:3:", 0) ==
        0);
  CHECK_FALSE(error_of("{\"manifold\": \"ellipse1d\", \"methods\": [\"gmls\"]\n \"N\": [400]}").empty());
  CHECK_FALSE(error_of("{\"manifold\": \"rbc2d\", \"mode\": \"well_sampled\", \"methods\": [\"gmls\"], \"N\": [400]}")
                  .empty());
  CHECK_FALSE(error_of("{\"manifold\": \"ellipse1d\", \"methods\": [\"gmls\"], \"N\": [20],"
                       " \"K_policy\": {\"type\": \"fixed\", \"K\": 30}}")
                  .empty());
  CHECK_FALSE(error_of("{\"manifold\": \"ellipse1d\", \"methods\": [\"gmls\"], \"N\": [400],"
                       " \"K_policy\": {\"type\": \"auto\", \"K\": 30}}")
                  .empty());
}

TEST_CASE("manifest round-trips") {
  ExperimentConfig c = parse_experiment_config(kSmallConfig);
  c.eig_count = 4;
  c.eig_shift = 7.5;
  c.inf_norm = false;
  c.solver.tol = 1e-11;
  const std::string text = manifest_json(c);
  const ExperimentConfig back = parse_experiment_config(text, "manifest");
  CHECK(manifest_json(back) == text);
  CHECK(back.eig_count == 4);
  CHECK(back.solver.tol == 1e-11);
}

TEST_CASE("runs are deterministic and ordered") {
  const ExperimentConfig c = parse_experiment_config(kSmallConfig);
  const auto a = run_experiment(c);
  const auto b = run_experiment(parse_experiment_config(manifest_json(c)));
  REQUIRE(a.size() == 3 * 2 * 2);
  CHECK(a[0].method.name() == "gmls:one_over_k");
  CHECK(a[0].N == 200);
  CHECK(a[1].trial == 1);
  CHECK(a[2].N == 400);
  CHECK(a[4].method.name() == "grbffd");
  std::ostringstream sa, sb;
  write_convergence_csv(sa, a);
  write_convergence_csv(sb, b);
  CHECK(without_wall_time(sa.str()) == without_wall_time(sb.str()));
  CHECK(sa.str().rfind("manifold,method,weight,l,kappa,K_policy,N,trial,seed,FE,IE,inf_norm_inv,mean_K,"
                       "max_gamma_fail,wall_time_s\n",
                       0) == 0);

  std::istringstream in(sa.str());
  const auto back = read_convergence_csv(in);
  REQUIRE(back.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(back[i].fe == doctest::Approx(a[i].fe).epsilon(1e-9));
    CHECK(back[i].method.name() == a[i].method.name());
    CHECK(back[i].seed == a[i].seed);
  }
}

TEST_CASE("summary statistics over trials") {
  std::vector<RunRecord> records(3);
  const double fe[] = {1.0, 2.0, 6.0};
  for (int t = 0; t < 3; ++t) {
    records[t].method = MethodSpec::parse("grbffd");
    records[t].N = 100;
    records[t].trial = t;
    records[t].fe = fe[t];
    records[t].ie = 1.0;
  }
  const auto rows = summarize(records);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].trials == 3);
  CHECK(rows[0].fe_mean == doctest::Approx(3.0));
  CHECK(rows[0].fe_median == doctest::Approx(2.0));
  CHECK(rows[0].fe_std == doctest::Approx(std::sqrt(7.0)));
  CHECK(rows[0].ie_std == 0.0);
}

TEST_CASE("run outputs land in the output directory") {
  ExperimentConfig c = parse_experiment_config(kSmallConfig);
  c.Ns = {200};
  c.trials = 1;
  c.eig_count = 2;
  c.output_dir = (std::filesystem::temp_directory_path() / "grbf_run_outputs").string();
  write_run_outputs(c, run_experiment(c));
  for (const char* f : {"convergence.csv", "summary.csv", "eigenvalues.csv", "manifest.json"}) {
    CHECK(std::filesystem::exists(std::filesystem::path(c.output_dir) / f));
  }
  std::ifstream manifest(std::filesystem::path(c.output_dir) / "manifest.json");
  std::stringstream text;
  text << manifest.rdbuf();
  CHECK(manifest_json(parse_experiment_config(text.str())) == manifest_json(c));
  std::filesystem::remove_all(c.output_dir);
}
