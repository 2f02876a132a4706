#include <gtest/gtest.h>

#include <mvh/cli.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using mvh::ConfigError;
using mvh::cli::Outcome;
using mvh::cli::RunOptions;

namespace {

const char* kSmall = R"({
  "schema_version": 1,
  "model": {
    "M": [[1.0]], "sigma": [[1.0]], "drift": {"type": "zero"},
    "K_B": 1.0, "beta": 0.75, "modulus": {"family": "power", "kappa": 0.5}, "T": 1.0
  },
  "initial": {"dirac": [0.0, 0.0]},
  "initial_tilde": {"dirac": [0.25, 0.1]},
  "simulation": {"seed": 5, "dt": 0.05, "n_paths": 400, "n_particles": 16},
  "checks": {
    "bismut": {"functions": ["x1", "x2"]},
    "harnack": {"functions": ["gauss2"], "p": [2.0], "bins": 4},
    "study": {"t_grid": [0.5, 1.0], "radii": [2.0, 4.0]}
  }
})";

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("mvh_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& file, const std::string& text) const {
    std::ofstream(path / file) << text;
    return path / file;
  }
};

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  if (pos == std::string::npos) throw std::logic_error("pattern not found: " + from);
  return s.replace(pos, from.size(), to);
}

std::string field_of(const std::string& text) {
  try {
    mvh::parse_config_text(text, "cfg.json");
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_quiet(const std::string& sub, const fs::path& cfg, const fs::path& out_dir, Outcome& out, int threads = -1) {
  std::ostringstream sink;
  RunOptions ro;
  ro.output_dir = out_dir.string();
  ro.threads = threads;
  ro.log = &sink;
  return mvh::cli::run_file(sub, cfg, ro, out);
}

}  // namespace

TEST(ConfigParse, SmallConfigLoads) {
  const auto c = mvh::parse_config_text(kSmall, "cfg.json");
  EXPECT_EQ(c.model->m(), 1);
  EXPECT_EQ(c.sim.seed, 5u);
  EXPECT_EQ(c.sim.n_paths, 400u);
  ASSERT_TRUE(c.initial_tilde.has_value());
}

TEST(ConfigParse, SyntaxErrorReportsLine) {
  try {
    mvh::parse_config_text("{\n  \"schema_version\": 1,\n  \"model\": ,\n}", "bad.json");
    FAIL() << "expected a parse error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(ConfigParse, FieldPathsInErrors) {
  EXPECT_EQ(field_of(replace(kSmall, R"("sigma": [[1.0]], )", "")), "model.sigma");
  EXPECT_EQ(field_of(replace(kSmall, R"("dt": 0.05)", R"("dt": "fast")")), "simulation.dt");
  EXPECT_EQ(field_of(replace(kSmall, R"("dt": 0.05)", R"("dt": 0.3)")), "simulation.dt");
  EXPECT_EQ(field_of(replace(kSmall, R"("schema_version": 1)", R"("schema_version": 2)")), "schema_version");
  EXPECT_EQ(field_of(replace(kSmall, R"("n_paths": 400)", R"("n_paths": 1)")), "simulation.n_paths");
  EXPECT_EQ(field_of(replace(kSmall, R"({"type": "zero"})", R"({"type": "cubic"})")), "model.drift.type");
  EXPECT_EQ(field_of(replace(kSmall, R"("family": "power")", R"("family": "exp")")), "model.modulus.family");
  EXPECT_EQ(field_of(replace(kSmall, R"("dirac": [0.0, 0.0])", R"("dirac": [0.0])")), "initial.dirac");
  EXPECT_EQ(field_of(replace(kSmall, R"("M": [[1.0]])", R"("M": [[1.0], [1.0, 2.0]])")), "model.M[1]");
}

TEST(CliRun, ExitCodes) {
  TempDir t("exit");
  const auto cfg = t.write("small.json", kSmall);
  Outcome a;
  EXPECT_EQ(run_quiet("validate", cfg, t.path / "out", a), mvh::cli::kPass);
  Outcome b;
  EXPECT_EQ(run_quiet("integrate", cfg, t.path / "out", b), mvh::cli::kUsage);
  Outcome c;
  EXPECT_EQ(run_quiet("validate", t.path / "missing.json", t.path / "out", c), mvh::cli::kUsage);
  Outcome d;
  const auto bad = t.write("bad.json", replace(kSmall, R"("dt": 0.05)", R"("dt": -1)"));
  EXPECT_EQ(run_quiet("simulate", bad, t.path / "out", d), mvh::cli::kUsage);
  // metrics falls back to the two initial laws; without a second law it is a usage error
  Outcome e;
  EXPECT_EQ(run_quiet("metrics", cfg, t.path / "out", e), mvh::cli::kPass);
  Outcome f;
  const auto one = t.write("one.json", replace(kSmall, R"("initial_tilde": {"dirac": [0.25, 0.1]},)", ""));
  EXPECT_EQ(run_quiet("metrics", one, t.path / "out", f), mvh::cli::kUsage);
}

TEST(CliRun, ValidationFailureBlocksOtherSubcommands) {
  TempDir t("blocked");
  const auto cfg = t.write("sing.json", replace(kSmall, R"("sigma": [[1.0]])", R"("sigma": [[0.0]])"));
  Outcome a;
  EXPECT_EQ(run_quiet("validate", cfg, t.path / "v", a), mvh::cli::kFail);
  Outcome b;
  EXPECT_EQ(run_quiet("simulate", cfg, t.path / "s", b), mvh::cli::kFail);
  bool refused = false;
  for (const auto& l : b.lines) refused = refused || l.find("refusing") != std::string::npos;
  EXPECT_TRUE(refused);
  for (const auto& f : b.files) EXPECT_EQ(f.filename().string().rfind("simulate", 0), std::string::npos) << f;
}

TEST(CliRun, HarnackIdentitiesReported) {
  TempDir t("harnack");
  const auto cfg = t.write("small.json", kSmall);
  Outcome o;
  EXPECT_NE(run_quiet("harnack", cfg, t.path / "out", o), mvh::cli::kUsage);
  EXPECT_TRUE(o.identities_checked);
  EXPECT_TRUE(o.identities_hold);
  EXPECT_FALSE(o.files.empty());
}

TEST(CliRun, OutputsIndependentOfThreadCount) {
  TempDir t("threads");
  const auto cfg = t.write("small.json", kSmall);
  for (const std::string sub : {"simulate", "bismut", "study"}) {
    Outcome a, b;
    const int ra = run_quiet(sub, cfg, t.path / (sub + "1"), a, 1);
    const int rb = run_quiet(sub, cfg, t.path / (sub + "4"), b, 4);
    EXPECT_EQ(ra, rb) << sub;
    ASSERT_EQ(a.files.size(), b.files.size()) << sub;
    for (std::size_t i = 0; i < a.files.size(); ++i) {
      EXPECT_EQ(a.files[i].filename(), b.files[i].filename());
      EXPECT_EQ(slurp(a.files[i]), slurp(b.files[i])) << a.files[i];
    }
  }
}

#ifdef MVH_CLI_PATH
TEST(CliBinary, UsageErrorsExitThree) {
  const std::string exe = MVH_CLI_PATH;
  auto code = [&](const std::string& args) {
    const int s = std::system((exe + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(code(""), 3);
  EXPECT_EQ(code("validate"), 3);
  EXPECT_EQ(code("validate /nonexistent.json"), 3);
  EXPECT_EQ(code("--help"), 0);
  TempDir t("binary");
  const auto cfg = t.write("small.json", kSmall);
  EXPECT_EQ(code("validate " + cfg.string() + " --out " + (t.path / "o").string()), 0);
}
#endif
