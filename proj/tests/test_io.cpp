#include "csck/io.hpp"

#include "csck/random_fields.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cstdlib>
#include <cstring>
#include <fstream>

using namespace csck;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  fs::path p = fs::temp_directory_path() / ("csck_io_test_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter++));
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

} // namespace

TEST_CASE("field JSON round trip is bit exact") {
  auto dir = temp_dir();
  GridSpec g(2, 16);
  auto f = random_kahler_potential<double>(g, 12345);
  f.values(3) = 0x1.fffffffffffffp-3; // awkward mantissa
  f.values(5) = -1e-300;
  save_field(f, dir / "f.json");
  auto f2 = load_field(dir / "f.json");
  REQUIRE(f2.grid == f.grid);
  CHECK(std::memcmp(f.values.data(), f2.values.data(), sizeof(double) * f.values.size()) == 0);
}

TEST_CASE("field JSON rejects malformed documents") {
  auto dir = temp_dir();
  io_detail::write_text_file(dir / "bad1.json", R"({"n":1,"N":16,"values":[0,0],"extra":1})");
  CHECK_THROWS_AS(load_field(dir / "bad1.json"), ParseError);

  io_detail::write_text_file(dir / "bad2.json", R"({"n":1,"N":16,"values":[0,0]})");
  CHECK_THROWS_AS(load_field(dir / "bad2.json"), ValidationError); // wrong count

  io_detail::write_text_file(dir / "bad3.json", R"({"n":3,"N":16,"values":[]})");
  CHECK_THROWS_AS(load_field(dir / "bad3.json"), ValidationError); // bad dimension

  io_detail::write_text_file(dir / "bad4.json", "{nope");
  CHECK_THROWS_AS(load_field(dir / "bad4.json"), ParseError);

  CHECK_THROWS_AS(load_field(dir / "absent.json"), IoError);

  // grid mismatch against the caller's expectation
  auto f = Field<double>::zero(GridSpec(1, 16));
  save_field(f, dir / "f16.json");
  CHECK_THROWS_AS(load_field(dir / "f16.json", GridSpec(1, 32)), ValidationError);
}

TEST_CASE("trace CSV: exact header, one line per row, empty optionals") {
  IterationTrace<double> tr;
  CHECK(trace_csv(tr) == std::string(kTraceHeader) + "\n"); // header-only for empty traces

  TraceRow<double> row;
  row.step = 2;
  row.K = 0.5;
  row.Ent = 0.25;
  row.supR = 1e-9;
  row.sup_u = 0.0625;
  row.sup_F = 0.125;
  row.min_eig_g = 0.75;
  row.newton_iters = 4;
  tr.rows.push_back(row);
  std::string csv = trace_csv(tr);
  const std::string expected = std::string(kTraceHeader) + "\n2,0.5,,0.25,,,," +
                               io_detail::fmt_double(1e-9) + ",,0.0625,0.125,0.75,4\n";
  CHECK(csv == expected);

  // 13 comma-separated columns on every line
  auto count_cols = [](const std::string& line) {
    return 1 + std::count(line.begin(), line.end(), ',');
  };
  std::string header = csv.substr(0, csv.find('\n'));
  CHECK(count_cols(header) == 13);
  std::string second = csv.substr(csv.find('\n') + 1);
  second = second.substr(0, second.find('\n'));
  CHECK(count_cols(second) == 13);
}

TEST_CASE("identical runs produce byte-identical traces") {
  GridSpec g(1, 32);
  auto bg = BackgroundGeometry<double>::flat_torus(g);
  IterationConfig<double> cfg;
  cfg.initial = random_kahler_potential<double>(g, 2718, 0.2);
  cfg.settings.tau = 1.0;
  cfg.settings.max_steps = 50;
  cfg.solver.continuation_steps = 2;
  auto a = run(cfg, bg);
  auto b = run(cfg, bg);
  REQUIRE(a.ok());
  REQUIRE(b.ok());
  CHECK(trace_csv(a.trace) == trace_csv(b.trace));
}

TEST_CASE("config parsing: defaults, unknown keys, validation") {
  auto dir = temp_dir();
  save_field(Field<double>::zero(GridSpec(1, 64)), dir / "u0.json");

  io_detail::write_text_file(dir / "min.json", R"({"n":1,"N":64,"tau":1,"initial":"u0.json"})");
  auto cfg = parse_config(dir / "min.json");
  CHECK(cfg.grid.N == 64);
  CHECK(cfg.iteration.tau == 1.0);
  CHECK(cfg.iteration.max_steps == 500);       // default filled
  CHECK(cfg.iteration.stop_R_sup == 1e-8);     // default filled
  CHECK(cfg.solver.tol_residual == 1e-10);     // default filled
  CHECK(cfg.solver.max_krylov == 200);
  auto initial = make_initial(cfg);
  CHECK(initial.grid == cfg.grid);

  io_detail::write_text_file(dir / "negtau.json", R"({"n":1,"N":64,"tau":-1})");
  bool caught = false;
  try {
    parse_config(dir / "negtau.json");
  } catch (const ValidationError& e) {
    caught = true;
    CHECK(std::string(e.what()).find("tau") != std::string::npos);
  }
  CHECK(caught);

  io_detail::write_text_file(dir / "unknown.json", R"({"n":1,"N":64,"tau":1,"taus":[1]})");
  bool caught2 = false;
  try {
    parse_config(dir / "unknown.json");
  } catch (const ParseError& e) {
    caught2 = true;
    CHECK(std::string(e.what()).find("taus") != std::string::npos);
  }
  CHECK(caught2);
}

TEST_CASE("config parsing: indefinite chi0 is refused with the hypothesis named") {
  auto dir = temp_dir();
  GridSpec g(1, 64);
  // Hess(psi) amplitude 0.02 * 4pi^2 ~ 0.79 > a = 0.5: eigenvalue scan fails
  auto psi = Field<double>::from_function(
      g, [](double x, double) { return 0.02 * std::cos(oracle::kTwoPi * x); });
  save_field(psi, dir / "psi.json");
  io_detail::write_text_file(
      dir / "twisted.json",
      R"({"n":1,"N":64,"tau":1,"chi0":{"a":0.5,"psi":"psi.json"}})");
  auto cfg = parse_config(dir / "twisted.json");
  bool caught = false;
  try {
    make_twist(cfg);
  } catch (const ValidationError& e) {
    caught = true;
    CHECK(std::string(e.what()).find("semipositive") != std::string::npos);
  }
  CHECK(caught);
}

TEST_CASE("config parsing: random initial with seed override") {
  auto dir = temp_dir();
  io_detail::write_text_file(
      dir / "rand.json",
      R"({"n":2,"N":16,"initial":{"seed":7,"hess_amplitude":0.25,"max_mode":2}})");
  auto cfg = parse_config(dir / "rand.json");
  auto a = make_initial(cfg);
  auto b = make_initial(cfg);
  CHECK((a - b).sup_norm() == 0.0); // deterministic
  auto c = make_initial(cfg, 8);
  CHECK((a - c).sup_norm() > 0.0); // --seed overrides
}

TEST_CASE("checkpoint names are zero padded") {
  CHECK(checkpoint_name(0) == "u_000000.json");
  CHECK(checkpoint_name(7) == "u_000007.json");
  CHECK(checkpoint_name(123456) == "u_123456.json");
}

#ifdef CSCK_CLI_PATH
namespace {
int run_cli(const std::string& args) {
  const std::string cmd = std::string(CSCK_CLI_PATH) + " " + args + " 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}
} // namespace

TEST_CASE("cli: functionals subcommand emits a report") {
  auto dir = temp_dir();
  GridSpec g(1, 64);
  save_field(Field<double>::zero(g), dir / "u.json");
  save_field(random_kahler_potential<double>(g, 5), dir / "v.json");
  const std::string out = (dir / "report.json").string();
  const int rc = std::system((std::string(CSCK_CLI_PATH) + " functionals " +
                              (dir / "u.json").string() + " " + (dir / "v.json").string() +
                              " > " + out)
                                 .c_str());
  REQUIRE(WEXITSTATUS(rc) == 0);
  auto rep = nlohmann::json::parse(slurp(out));
  for (const char* key : {"E", "I", "J", "Ent", "K", "quasi_d1"}) CHECK(rep.contains(key));
  CHECK(!rep.contains("Kchi"));
  CHECK(rep["Ent"].get<double>() >= 0.0);
}

TEST_CASE("cli: iterate writes trace, checkpoints and manifest") {
  auto dir = temp_dir();
  GridSpec g(1, 32);
  auto u0 = Field<double>::from_function(
      g, [](double x, double) { return 0.01 * std::cos(oracle::kTwoPi * x); });
  save_field(u0, dir / "u0.json");
  io_detail::write_text_file(dir / "run.json",
                             R"({"n":1,"N":32,"tau":1,"initial":"u0.json",
                                 "solver":{"continuation_steps":2}})");
  const auto out = dir / "out";
  const auto ckpt = dir / "ckpt";
  const int rc = run_cli("iterate --config " + (dir / "run.json").string() + " --out " +
                         out.string() + " --checkpoint-dir " + ckpt.string() + " --quiet");
  REQUIRE(rc == 0);

  auto csv = slurp(out / "trace.csv");
  CHECK(csv.rfind(kTraceHeader, 0) == 0);
  CHECK(fs::exists(ckpt / "u_000000.json"));

  auto man = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(man["outcome"] == "success");
  CHECK(man["command"] == "iterate");
  for (const auto& f : man["outputs"]) CHECK(fs::exists(f.get<std::string>()));
}

TEST_CASE("cli: exit codes for validation and io failures") {
  auto dir = temp_dir();
  io_detail::write_text_file(dir / "bad.json", R"({"n":1,"N":64,"tau":-2})");
  CHECK(run_cli("iterate --config " + (dir / "bad.json").string() + " --quiet") == 2);
  CHECK(run_cli("iterate --config " + (dir / "missing.json").string() + " --quiet") == 4);
}

TEST_CASE("cli: solver failure exits with code 3 and keeps the manifest") {
  auto dir = temp_dir();
  io_detail::write_text_file(dir / "hard.json",
                             R"({"n":1,"N":32,"initial":{"seed":616},
                                 "solver":{"max_newton":1,"continuation_steps":0}})");
  const auto out = dir / "out";
  CHECK(run_cli("iterate --config " + (dir / "hard.json").string() + " --out " + out.string() +
                " --quiet") == 3);
  auto man = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(man["outcome"].get<std::string>().rfind("solver-failure", 0) == 0);
  CHECK(fs::exists(out / "trace.csv")); // trace up to the failing step is kept
}

TEST_CASE("cli: flow subcommand") {
  auto dir = temp_dir();
  GridSpec g(1, 32);
  save_field(Field<double>::zero(g), dir / "u0.json");
  io_detail::write_text_file(dir / "flow.json",
                             R"({"n":1,"N":32,"initial":"u0.json",
                                 "t_end":0.001,"dt":1e-4,"scheme":"imex"})");
  const auto out = dir / "out";
  REQUIRE(run_cli("flow --config " + (dir / "flow.json").string() + " --out " + out.string() +
                  " --quiet") == 0);
  CHECK(slurp(out / "trace.csv").rfind(kTraceHeader, 0) == 0);
  auto man = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(man["command"] == "flow");
}

TEST_CASE("cli: sweep-tau runs each tau into its own directory") {
  auto dir = temp_dir();
  GridSpec g(1, 32);
  auto u0 = Field<double>::from_function(
      g, [](double x, double) { return 0.005 * std::cos(oracle::kTwoPi * x); });
  save_field(u0, dir / "u0.json");
  io_detail::write_text_file(dir / "sweep.json",
                             R"({"n":1,"N":32,"initial":"u0.json","tau_list":[1,10],
                                 "solver":{"continuation_steps":2}})");
  const auto out = dir / "out";
  REQUIRE(run_cli("sweep-tau --config " + (dir / "sweep.json").string() + " --out " +
                  out.string() + " --quiet") == 0);
  CHECK(fs::exists(out / "tau_1" / "trace.csv"));
  CHECK(fs::exists(out / "tau_10" / "trace.csv"));
  auto man = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(man["outcome"] == "success");
}

TEST_CASE("cli: compare-rothe emits the {tau, err, order} array") {
  auto dir = temp_dir();
  GridSpec g(1, 32);
  save_field(Field<double>::zero(g), dir / "u0.json");
  io_detail::write_text_file(dir / "rothe.json",
                             R"({"n":1,"N":32,"initial":"u0.json","tau_list":[0.01,0.005],
                                 "t_end":0.02,"dt":1e-4})");
  const auto out = dir / "out";
  REQUIRE(run_cli("compare-rothe --config " + (dir / "rothe.json").string() + " --out " +
                  out.string() + " --quiet") == 0);
  auto rep = nlohmann::json::parse(slurp(out / "rothe.json"));
  REQUIRE(rep.is_array());
  REQUIRE(rep.size() == 2);
  for (const auto& e : rep) {
    CHECK(e.contains("tau"));
    CHECK(e.contains("err"));
    CHECK(e.contains("order"));
  }
  CHECK(rep[0]["err"].get<double>() == 0.0); // flat initial
}
#endif
