#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dtq/config_io.hpp"
#include "dtq/errors.hpp"

using namespace dtq;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path test_root() {
  static fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "dtq_config_io_tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = test_root() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& text) {
  fs::path p = dir / name;
  std::ofstream out(p, std::ios::binary);
  out << text;
  return p;
}

int call_cli(std::vector<std::string> args) {
  std::vector<char*> argv;
  argv.reserve(args.size());
  for (std::string& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

template <class F>
std::string validation_message(F&& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.what();
  }
  FAIL("expected ValidationError");
  return {};
}

// const1d with the short horizon most end-to-end cases here use.
std::string const1d_config(const std::string& extra) {
  return std::string(
             R"({"problem": "const1d", "h": 0.05, "end_time": 0.25, "beta": 4,
                 "delta_min": 0.4, "delta_max": 0.4, "radius": 2)") +
         extra + "}";
}

} // namespace

TEST_CASE("minimal 2d config picks up the per-dimension defaults") {
  AppConfig cfg = parse_config_text(
      R"({"problem": "movinghill2d", "h": 0.01, "end_time": 1.15, "beta": 4,
          "delta_min": 0.2, "delta_max": 0.2, "radius": 2})");
  CHECK(cfg.mode == "adaptive");
  CHECK(cfg.output_dir == ".");
  CHECK(cfg.problem_name == "movinghill2d");
  CHECK(cfg.solver.problem.dim == 2);
  CHECK(cfg.solver.epsilon == doctest::Approx(0.1));
  CHECK(cfg.solver.cond_alt == doctest::Approx(5.0));
  CHECK(cfg.solver.lp_q == 10);
  CHECK(cfg.solver.laplace_nn == 20);
  CHECK(cfg.solver.candidate_size == 150);
  CHECK(cfg.solver.step_ac == 1);
  CHECK(cfg.solver.step_a == 1);
  CHECK(cfg.solver.step_rc == 10);
  CHECK(cfg.solver.step_r == 10);
  CHECK(cfg.solver.snapshot_times.empty());
  CHECK(!cfg.kappa);
  CHECK(!cfg.buffer);
}

TEST_CASE("5d and 3d default rows") {
  AppConfig five = parse_config_text(
      R"json({"problem": "constNd(5, 1, 0.6)", "h": 0.02, "end_time": 0.02, "beta": 3,
          "delta_min": 0.3, "delta_max": 0.3, "radius": 0.9})json");
  CHECK(five.solver.problem.dim == 5);
  CHECK(five.solver.lp_q == 40);
  CHECK(five.solver.laplace_nn == 300);
  CHECK(five.solver.candidate_size == 450);

  AppConfig three = parse_config_text(
      R"json({"problem": "constNd(3)", "h": 0.02, "end_time": 1, "beta": 3,
          "delta_min": 0.22, "delta_max": 0.22, "radius": 1})json");
  CHECK(three.solver.lp_q == 15);
  CHECK(three.solver.laplace_nn == 150);
  CHECK(three.solver.candidate_size == 150);
}

TEST_CASE("explicit values beat defaults and dim must match the problem") {
  AppConfig cfg = parse_config_text(const1d_config(R"(, "dim": 1, "lp_q": 8, "epsilon": 0.2)"));
  CHECK(cfg.solver.lp_q == 8);
  CHECK(cfg.solver.epsilon == doctest::Approx(0.2));

  std::string msg =
      validation_message([] { parse_config_text(const1d_config(R"(, "dim": 2)")); });
  CHECK(msg.find("dim") != std::string::npos);
}

TEST_CASE("config rejections") {
  SUBCASE("lp_q below the quadratic fit minimum") {
    CHECK_THROWS_AS(parse_config_text(
                        R"({"problem": "movinghill2d", "h": 0.01, "end_time": 1, "beta": 4,
                            "delta_min": 0.2, "delta_max": 0.2, "radius": 2, "lp_q": 3})"),
                    ValidationError);
  }
  SUBCASE("unknown key is a hard error and is named") {
    std::string msg = validation_message(
        [] { parse_config_text(const1d_config(R"(, "delta_mx": 0.4)")); });
    CHECK(msg.find("delta_mx") != std::string::npos);
  }
  SUBCASE("missing required key is named") {
    std::string msg = validation_message([] {
      parse_config_text(R"({"problem": "const1d", "end_time": 1, "beta": 4,
                            "delta_min": 0.4, "delta_max": 0.4, "radius": 2})");
    });
    CHECK(msg.find("h is required") != std::string::npos);
  }
  SUBCASE("kappa and buffer need a tensor mode") {
    CHECK_THROWS_AS(parse_config_text(const1d_config(R"(, "kappa": 0.1)")), ValidationError);
    CHECK_THROWS_AS(parse_config_text(const1d_config(R"(, "buffer": 0.5)")), ValidationError);
  }
  SUBCASE("bad mode, bad snapshot_times, bad JSON, unknown problem") {
    CHECK_THROWS_AS(parse_config_text(const1d_config(R"(, "mode": "exact")")), ValidationError);
    CHECK_THROWS_AS(parse_config_text(const1d_config(R"(, "snapshot_times": 0.5)")),
                    ValidationError);
    CHECK_THROWS_AS(parse_config_text(const1d_config(R"(, "snapshot_times": ["a"])")),
                    ValidationError);
    CHECK_THROWS_AS(parse_config_text("not json"), ValidationError);
    CHECK_THROWS_AS(parse_config_text(
                        R"({"problem": "warp5d", "h": 0.1, "end_time": 1, "beta": 4,
                            "delta_min": 0.4, "delta_max": 0.4, "radius": 2})"),
                    ValidationError);
  }
}

TEST_CASE("write_config materializes defaults and round-trips exactly") {
  const std::string text = const1d_config(
      R"(, "snapshot_times": [0.1, 0.25], "mode": "trapezoid", "kappa": 0.1)");
  AppConfig cfg = parse_config_text(text);
  CHECK(cfg.buffer == 0.0); // materialized tensor-mode default
  const std::string echoed = write_config(cfg);
  AppConfig again = parse_config_text(echoed);
  CHECK(write_config(again) == echoed);
  CHECK(again.solver.lp_q == cfg.solver.lp_q);
  CHECK(again.solver.h == cfg.solver.h);
  CHECK(again.mode == "trapezoid");
  CHECK(again.kappa == cfg.kappa);
  CHECK(again.solver.snapshot_times == cfg.solver.snapshot_times);

  // The echo names every solver key, so a reader sees the whole picture.
  json j = json::parse(echoed);
  for (const char* key : {"problem", "dim", "epsilon", "cond_alt", "lp_q", "laplace_nn",
                          "candidate_size", "step_ac", "step_a", "step_rc", "step_r"})
    CHECK(j.contains(key));
}

TEST_CASE("snapshot files: naming, layout, 17 significant digits") {
  CHECK(snapshot_filename(0.25) == "snapshot_0.250000.csv");
  CHECK(snapshot_filename(1.15) == "snapshot_1.150000.csv");

  fs::path dir = fresh_dir("snapshot_unit");
  Matrix pts(3, 1);
  pts << -1.5, 0.0, 2.25;
  std::vector<double> dens = {0.1, 1.0 / 3.0, 7.25e-5};
  write_snapshot(dir.string(), 0.25, pts, dens);

  std::istringstream in(slurp(dir / "snapshot_0.250000.csv"));
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "t,x1,p");
  for (int i = 0; i < 3; ++i) {
    std::istringstream row(lines[static_cast<std::size_t>(i) + 1]);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(row, cell, ',')) vals.push_back(std::strtod(cell.c_str(), nullptr));
    REQUIRE(vals.size() == 3);
    CHECK(vals[0] == 0.25);
    // %.17g is enough digits for strtod to reproduce the doubles bit for bit
    CHECK(std::memcmp(&vals[1], &pts(i, 0), sizeof(double)) == 0);
    CHECK(std::memcmp(&vals[2], &dens[static_cast<std::size_t>(i)], sizeof(double)) == 0);
  }
}

TEST_CASE("run_app adaptive: artifacts, manifest schema, reproducibility") {
  fs::path dir = fresh_dir("run_adaptive");
  AppConfig cfg = parse_config_text(const1d_config(
      R"(, "snapshot_times": [0.1, 0.25, 9.0], "output_dir": ")" + dir.string() + "\""));
  CHECK(run_app(cfg) == 0);

  CHECK(fs::exists(dir / "snapshot_0.100000.csv"));
  CHECK(fs::exists(dir / "snapshot_0.250000.csv"));
  CHECK(!fs::exists(dir / "snapshot_9.000000.csv")); // beyond end_time: warned and skipped

  json manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["aborted"] == false);
  REQUIRE(manifest["steps"].is_array());
  CHECK(manifest["steps"].size() == 4); // steps 2..5 of the 0.25/0.05 run
  for (const auto& s : manifest["steps"])
    for (const char* key : {"step", "mesh_size", "reuse", "alt", "fresh", "added", "removed",
                            "seconds"})
      CHECK(s.contains(key));
  CHECK(manifest["errors_final"]["l2p"].is_number());
  CHECK(manifest["errors_final"]["l2p"].get<double>() >= 0.0);
  CHECK(!manifest["avg_leja_reuse_pct"].is_null());
  CHECK(!manifest["avg_alt_pct"].is_null());
  CHECK(manifest["peak_mesh_size"].get<int>() >= 11);
  CHECK(manifest["wall_seconds"].get<double>() > 0.0);

  // the embedded config echo parses back to the run's exact configuration
  AppConfig echoed = parse_config_text(manifest["config"].dump());
  CHECK(write_config(echoed) == write_config(cfg));

  // identical configs give byte-identical snapshots
  fs::path dir2 = fresh_dir("run_adaptive_again");
  AppConfig cfg2 = cfg;
  cfg2.output_dir = dir2.string();
  CHECK(run_app(cfg2) == 0);
  CHECK(slurp(dir2 / "snapshot_0.250000.csv") == slurp(dir / "snapshot_0.250000.csv"));
}

TEST_CASE("run_app trapezoid: standalone grid over the configured radius") {
  fs::path dir = fresh_dir("run_trapezoid");
  AppConfig cfg = parse_config_text(const1d_config(
      R"(, "mode": "trapezoid", "kappa": 0.1, "snapshot_times": [0.25],
          "output_dir": ")" +
      dir.string() + "\""));
  CHECK(run_app(cfg) == 0);

  json manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["aborted"] == false);
  CHECK(manifest["peak_mesh_size"].get<int>() == 41); // [-2, 2] at spacing 0.1
  CHECK(manifest["steps"].empty());
  CHECK(manifest["avg_leja_reuse_pct"].is_null());
  CHECK(manifest["errors_final"]["l2p"].get<double>() < 0.01);

  std::istringstream in(slurp(dir / "snapshot_0.250000.csv"));
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 42); // header plus one row per grid point
}

TEST_CASE("run_app compare: both runs plus a discrepancy block") {
  fs::path dir = fresh_dir("run_compare");
  AppConfig cfg = parse_config_text(
      R"({"problem": "movinghill2d", "h": 0.05, "end_time": 0.15, "beta": 3,
          "delta_min": 0.25, "delta_max": 0.25, "radius": 1,
          "mode": "compare", "kappa": 0.25, "buffer": 0.5,
          "snapshot_times": [0.15], "output_dir": ")" +
      dir.string() + "\"}");
  CHECK(run_app(cfg) == 0);

  CHECK(fs::exists(dir / "adaptive" / "snapshot_0.150000.csv"));
  CHECK(fs::exists(dir / "trapezoid" / "snapshot_0.150000.csv"));

  json manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["aborted"] == false);
  CHECK(manifest["adaptive"]["errors_final"]["l2p"].is_number());
  CHECK(manifest["adaptive"]["peak_mesh_size"].get<int>() >= 49);
  CHECK(manifest["trapezoid"]["errors_final"]["l2p"].is_number());
  CHECK(manifest["trapezoid"]["grid_points"].get<int>() > 0);
  REQUIRE(manifest["discrepancy"]["points"].get<int>() > 0);
  for (const char* key : {"l2p", "l2", "l1", "linf"}) {
    CHECK(manifest["discrepancy"][key].is_number());
    CHECK(manifest["discrepancy"][key].get<double>() >= 0.0);
  }
}

TEST_CASE("run_app abort: collapse run still writes a truthful manifest") {
  // With beta this small the removal threshold is about 0.25 while the 1d
  // hill flattens below it well before the first removal step, so step 10
  // wants to drop every point.
  fs::path dir = fresh_dir("run_abort");
  AppConfig cfg = parse_config_text(
      R"({"problem": "const1d", "h": 0.5, "end_time": 10, "beta": 0.1,
          "delta_min": 0.4, "delta_max": 0.4, "radius": 2, "output_dir": ")" +
      dir.string() + "\"}");
  CHECK(run_app(cfg) == 3);

  json manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["aborted"] == true);
  CHECK(manifest["abort_reason"].get<std::string>().size() > 0);
  const std::size_t done = manifest["steps"].size();
  CHECK(done >= 1);  // some steps completed before the collapse
  CHECK(done < 19);  // but not the whole run
}

TEST_CASE("cli verbs and exit codes") {
  fs::path dir = fresh_dir("cli");
  fs::path good = write_file(dir, "good.json", const1d_config(""));
  fs::path bad_key = write_file(dir, "bad_key.json", const1d_config(R"(, "delta_mx": 1)"));
  fs::path collapse = write_file(
      dir, "collapse.json",
      R"({"problem": "const1d", "h": 0.5, "end_time": 10, "beta": 0.1,
          "delta_min": 0.4, "delta_max": 0.4, "radius": 2, "output_dir": ")" +
          (dir / "collapse_out").string() + "\"}");

  CHECK(call_cli({"dtq", "validate", "--config", good.string()}) == 0);
  CHECK(call_cli({"dtq", "validate", "--config", bad_key.string()}) == 2);
  CHECK(call_cli({"dtq", "validate", "--config", (dir / "missing.json").string()}) == 2);
  CHECK(call_cli({"dtq", "run", "--config", collapse.string()}) == 3);
  CHECK(call_cli({"dtq"}) != 0); // a subcommand is required

  // run verb honors the config, DTQ_THREADS included
  fs::path out = dir / "cli_run_out";
  fs::path run_cfg = write_file(dir, "run.json",
                                const1d_config(R"(, "output_dir": ")" + out.string() + "\""));
  setenv("DTQ_THREADS", "2", 1);
  CHECK(call_cli({"dtq", "run", "--config", run_cfg.string()}) == 0);
  unsetenv("DTQ_THREADS");
  CHECK(fs::exists(out / "manifest.json"));

  // compare verb forces compare mode and takes grid geometry from flags
  fs::path cmp_out = dir / "cli_cmp_out";
  fs::path cmp_cfg = write_file(
      dir, "cmp.json",
      R"({"problem": "movinghill2d", "h": 0.05, "end_time": 0.1, "beta": 3,
          "delta_min": 0.25, "delta_max": 0.25, "radius": 1, "output_dir": ")" +
          cmp_out.string() + "\"}");
  CHECK(call_cli({"dtq", "compare", "--config", cmp_cfg.string(), "--kappa", "0.25",
                  "--buffer", "0.5"}) == 0);
  json manifest = json::parse(slurp(cmp_out / "manifest.json"));
  CHECK(manifest["config"]["mode"] == "compare");
  CHECK(manifest["config"]["kappa"].get<double>() == 0.25);
  CHECK(manifest.contains("discrepancy"));

  // compare without any kappa is rejected up front
  CHECK(call_cli({"dtq", "compare", "--config", cmp_cfg.string()}) == 2);
}
