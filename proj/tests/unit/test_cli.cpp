#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "common.hpp"
#include "diagnosys/cli.hpp"

using namespace diagnosys;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args, const std::string& input = {}) {
  args.insert(args.begin(), "diagnosys");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::istringstream in(input);
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), in, out, err);
  return {code, out.str(), err.str()};
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "diagnosys_cli_test";
  fs::create_directories(dir);
  return dir / name;
}

const std::string kKb = testkit::kKbDir;

}  // namespace

TEST(Cli, HelpExitsZeroEverywhere) {
  for (auto args : std::vector<std::vector<std::string>>{
           {"--help"}, {"chat", "--help"}, {"serve", "--help"}, {"kb", "--help"}, {"kb", "validate", "--help"},
           {"kb", "similarity", "--help"}, {"eval", "--help"}, {"ablate", "--help"}}) {
    auto r = run(args);
    EXPECT_EQ(r.code, 0) << args.back() << r.err;
    EXPECT_FALSE(r.out.empty());
  }
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"eval", "--bogus"}).code, 2);
  EXPECT_EQ(run({"ablate", "--grid", "table9"}).code, 2);
  EXPECT_EQ(run({"eval", "--kb", "/nonexistent/dir"}).code, 2);
  EXPECT_EQ(run({"eval", "--folds", "1"}).code, 2);
  EXPECT_EQ(run({"kb"}).code, 2);
}

TEST(Cli, ConfigFileIsValidated) {
  const auto bad = scratch("bad.json");
  std::ofstream(bad) << R"({"min_questions": 5, "bogus": 1})";
  auto r = run({"eval", "--kb", kKb, "--config", bad.string()});
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_NE(r.err.find("bogus"), std::string::npos) << r.err;

  std::ofstream(bad) << R"({"global_weight": 0.9})";  // weights no longer sum to 1
  EXPECT_EQ(run({"eval", "--kb", kKb, "--config", bad.string()}).code, 2);

  auto cfg = parse_config_json(nlohmann::json::parse(
      R"({"min_symptoms": 4, "confidence_early_stop": 0.7, "llm": {"model": "m", "retries": 0}, "embedding_url": "http://e"})"));
  EXPECT_EQ(cfg.engine.min_symptoms, 4);
  EXPECT_EQ(cfg.engine.confidence_early_stop, 0.7);
  EXPECT_EQ(cfg.llm.model, "m");
  EXPECT_EQ(cfg.llm.retries, 0);
  EXPECT_EQ(cfg.embedding_url, "http://e");
}

TEST(Cli, KbValidateAndSimilarity) {
  auto r = run({"kb", "validate", "--kb", kKb});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("14 diseases OK"), std::string::npos);
  const auto csv = scratch("sim.csv");
  EXPECT_EQ(run({"kb", "similarity", "--kb", kKb, "--out", csv.string()}).code, 0);
  const auto text = read_file(csv);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 15);
}

TEST(Cli, KbValidateReportsBrokenDocuments) {
  const auto dir = scratch("broken_kb");
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (const auto& e : fs::directory_iterator(kKb))
    if (e.path().filename().string().find(".disease.txt") != std::string::npos)
      fs::copy_file(e.path(), dir / e.path().filename());
  std::ofstream(dir / "zz.disease.txt") << "name: Broken\ncategory: Nonsense\n";
  auto r = run({"kb", "validate", "--kb", dir.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
  fs::remove_all(dir);
}

TEST(Cli, AblateWritesCsv) {
  const auto csv = scratch("t7.csv");
  auto r = run({"ablate", "--kb", kKb, "--grid", "table7", "--per-disease", "2", "--out", csv.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto text = read_file(csv);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
  EXPECT_EQ(text.rfind(std::string(kMetricsCsvHeader), 0), 0u);
  EXPECT_NE(text.find("\nHybrid_50_50,"), std::string::npos);
}

TEST(Cli, EvalPrintsFoldTableAndBaseline) {
  const auto cases = scratch("cases.jsonl");
  {
    std::ofstream f(cases);
    write_cases(f, generate_cases(testkit::bundled()->kb(), 3, 5));
  }
  const auto csv = scratch("folds.csv");
  auto r = run({"eval", "--kb", kKb, "--cases", cases.string(), "--folds", "3", "--out", csv.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Mean ± Std. Dev."), std::string::npos);
  EXPECT_NE(r.out.find("Naive Bayes (TF-IDF)"), std::string::npos);
  const auto text = read_file(csv);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}

TEST(Cli, ChatReplaysScriptedDenguePatient) {
  const auto script = read_file(fs::path(DIAGNOSYS_TEST_FIXTURES) / "chat_dengue.txt");
  ASSERT_FALSE(script.empty());
  auto r = run({"chat", "--kb", kKb}, script);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("why:"), std::string::npos);
  auto pos = r.out.find("=== Diagnostic report ===");
  ASSERT_NE(pos, std::string::npos) << r.out;
  EXPECT_NE(r.out.find("Most likely: Dengue Fever", pos), std::string::npos) << r.out.substr(pos);
}

TEST(Cli, ChatOnEmptyInputStillReports) {
  auto r = run({"chat", "--kb", kKb}, "");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("=== Diagnostic report ==="), std::string::npos);
}

TEST(Cli, LiveModeNeedsToken) {
  ::unsetenv("DIAGNOSYS_LLM_TOKEN");
  auto r = run({"chat", "--kb", kKb, "--mode", "live"}, "fever\n");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("DIAGNOSYS_LLM_TOKEN"), std::string::npos) << r.err;
  EXPECT_EQ(run({"eval", "--kb", kKb, "--mode", "live"}).code, 2);  // eval is offline only
}
