#pragma once

// Command-line front end: chat, serve, kb validate|similarity, eval, ablate.
// Everything machine-readable goes to `out` or --out files; diagnostics go to `err`.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "diagnosys/consultation.hpp"
#include "diagnosys/eval.hpp"
#include "diagnosys/remote.hpp"
#include "diagnosys/service.hpp"

namespace diagnosys {

#ifndef DIAGNOSYS_DEFAULT_KB_DIR
#define DIAGNOSYS_DEFAULT_KB_DIR "data/kb"
#endif

struct CliConfig {
  std::filesystem::path kb_dir = DIAGNOSYS_DEFAULT_KB_DIR;
  std::optional<std::filesystem::path> config_file;
  std::string mode = "offline";
  std::uint64_t seed = 42;
};

struct FileConfig {
  EngineConfig engine;
  LlmConfig llm;
  std::optional<std::string> embedding_url;
};

/// Engine keys at top level, LLM keys under "llm". Unknown keys are rejected.
inline FileConfig parse_config_json(const nlohmann::json& j) {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::invalid_config, m); };
  if (!j.is_object()) bad("config must be a JSON object");
  FileConfig fc;
  auto& e = fc.engine;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "min_questions") e.min_questions = v.get<int>();
      else if (key == "min_symptoms") e.min_symptoms = v.get<int>();
      else if (key == "max_questions") e.max_questions = v.get<int>();
      else if (key == "sim_threshold") e.sim_threshold = v.get<double>();
      else if (key == "confidence_early_stop")
        e.confidence_early_stop = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      else if (key == "global_weight") e.global_weight = v.get<double>();
      else if (key == "local_weight") e.local_weight = v.get<double>();
      else if (key == "top_k_focus") e.top_k_focus = v.get<int>();
      else if (key == "embedding_url") fc.embedding_url = v.get<std::string>();
      else if (key == "llm") {
        if (!v.is_object()) bad("llm must be an object");
        for (const auto& [k2, w] : v.items()) {
          if (k2 == "base_url") fc.llm.base_url = w.get<std::string>();
          else if (k2 == "model") fc.llm.model = w.get<std::string>();
          else if (k2 == "temperature") fc.llm.temperature = w.get<double>();
          else if (k2 == "max_tokens") fc.llm.max_tokens = w.get<int>();
          else if (k2 == "retries") fc.llm.retries = w.get<int>();
          else if (k2 == "timeout_ms") fc.llm.timeout = std::chrono::milliseconds(w.get<long>());
          else bad("unknown config key: llm." + k2);
        }
      } else {
        bad("unknown config key: " + key);
      }
    }
  } catch (const nlohmann::json::exception& ex) {
    bad(std::string("wrong value type: ") + ex.what());
  }
  e.validate();
  fc.llm.validate();
  return fc;
}

namespace cli_detail {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline FileConfig load_file_config(const CliConfig& c) {
  if (!c.config_file) return {};
  std::ifstream in(*c.config_file);
  if (!in) throw UsageError("cannot read config file " + c.config_file->string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw UsageError("config file is not valid JSON");
  try {
    return parse_config_json(j);
  } catch (const Error& e) {
    throw UsageError(e.detail());
  }
}

inline std::shared_ptr<const DiagnosticContext> load_context(const CliConfig& c, const FileConfig& fc) {
  std::shared_ptr<const EmbeddingProvider> embedder;
  if (fc.embedding_url && c.mode == "live") embedder = std::make_shared<RemoteEmbedder>(*fc.embedding_url);
  return std::make_shared<const DiagnosticContext>(load_knowledge_base(c.kb_dir), std::move(embedder));
}

inline std::shared_ptr<LlmProvider> make_provider(const CliConfig& c, const FileConfig& fc) {
  if (c.mode != "live") return nullptr;
  auto token = llm_token_from_env();
  if (!token) throw UsageError(std::string("--mode live needs the ") + kLlmTokenEnv + " environment variable");
  return std::make_shared<HttpLlmProvider>(fc.llm, token);
}

inline void print_hypotheses(std::ostream& out, const ConsultationState& s, std::size_t n = 5) {
  out << "  " << std::left << std::setw(28) << "disease" << std::right << std::setw(8) << "C_d" << std::setw(8)
      << "rank" << std::setw(8) << "score" << "\n";
  for (const auto* h : s.top(n))
    out << "  " << std::left << std::setw(28) << h->disease << std::right << std::fixed << std::setprecision(3)
        << std::setw(8) << h->confidence << std::setw(8) << h->rank_score << std::setw(8) << h->score << "\n";
  out << "  overall confidence " << std::fixed << std::setprecision(3) << s.overall_confidence << "\n";
  out.unsetf(std::ios::fixed);
}

inline bool read_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  line = std::string(trim(line));
  return true;
}

/// EOF and blank lines count as "unsure"/"unknown", so a short script still
/// reaches the report.
inline int chat(const CliConfig& c, std::istream& in, std::ostream& out, std::ostream& err) {
  const auto fc = load_file_config(c);
  auto ctx = load_context(c, fc);
  Consultation consult(ctx, fc.engine, make_provider(c, fc));

  out << "Describe your symptoms:\n> " << std::flush;
  std::string line;
  read_line(in, line);
  if (!line.empty()) {
    auto m = consult.submit_text(line);
    out << "Recognized: " << (m.confirmed.empty() ? "(nothing)" : join(m.confirmed, ", ")) << "\n";
    for (const auto& r : m.extraction.rejected) err << "ignored phrase: " << r << "\n";
    print_hypotheses(out, consult.state());
  }

  while (!consult.report_ready()) {
    const auto& p = consult.pending();
    if (const auto* q = std::get_if<Question>(&p)) {
      out << "\n[" << q->id << "] " << q->prompt_text << " (yes/no/unsure)\n  why: " << q->justification << "\n> "
          << std::flush;
      std::optional<Answer> a;
      while (!a) {
        if (!read_line(in, line) || line.empty()) a = Answer::unsure;
        else if (!(a = parse_answer(line))) out << "please answer yes, no or unsure\n> " << std::flush;
      }
      const auto id = q->id;
      consult.answer(id, *a);
      print_hypotheses(out, consult.state());
      if (consult.entered_test_phase()) out << "\n-- moving on to test results --\n";
    } else if (const auto* t = std::get_if<TestQuestion>(&p)) {
      out << "\n[" << t->id << "] " << t->prompt_text << " (number or 'unknown')\n> " << std::flush;
      std::optional<double> v;
      bool done = false;
      while (!done) {
        if (!read_line(in, line) || line.empty() || to_lower(line) == "unknown") {
          done = true;
        } else {
          try {
            v = detail::parse_real(line, "test value");
            done = true;
          } catch (const Error&) {
            out << "please enter a number or 'unknown'\n> " << std::flush;
          }
        }
      }
      const auto id = t->id;
      for (const auto& o : consult.submit_test(id, v))
        out << "  " << o.disease << ": " << to_string(o.verdict) << (o.decisive_elimination ? " (eliminated)" : "")
            << "\n";
      print_hypotheses(out, consult.state());
    } else if (const auto* r = std::get_if<RiskQuestion>(&p)) {
      out << "\n[" << r->id << "] " << r->prompt_text << " (yes/no)\n> " << std::flush;
      std::optional<Answer> a;
      if (read_line(in, line)) a = parse_answer(line);
      const auto id = r->id;
      consult.answer_risk(id, a.value_or(Answer::unsure));
    }
  }
  out << "\n" << render_report(consult.finish());
  return 0;
}

inline int serve(const CliConfig& c, const std::string& host, int port, const std::string& cors, std::ostream& err) {
  const auto fc = load_file_config(c);
  auto ctx = load_context(c, fc);
  ServiceOptions opts;
  opts.cors_origin = cors;
  ConsultationService service(ctx, fc.engine, opts, make_provider(c, fc));
  httplib::Server server;
  mount_routes(server, service);
  err << "serving " << ctx->kb().size() << " diseases on http://" << host << ":" << port << "\n";
  if (!server.listen(host, port)) {
    err << "cannot bind " << host << ":" << port << "\n";
    return 1;
  }
  return 0;
}

inline int kb_validate(const CliConfig& c, std::ostream& out, std::ostream& err) {
  try {
    const auto kb = load_knowledge_base(c.kb_dir);
    const auto issues = validate_knowledge_base(kb);
    for (const auto& i : issues) err << i << "\n";
    if (!issues.empty()) {
      out << issues.size() << " problem(s) found\n";
      return 1;
    }
    out << kb.size() << " diseases OK\n";
    return 0;
  } catch (const Error& e) {
    err << e.what() << "\n";
    return 1;
  }
}

inline void write_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::io_error, path);
  f << text;
}

inline std::vector<SimCase> load_or_generate(const KnowledgeBase& kb, const std::string& cases_file, int per_disease,
                                             std::uint64_t seed) {
  if (cases_file.empty()) return generate_cases(kb, per_disease, seed);
  std::ifstream in(cases_file);
  if (!in) throw Error(ErrorCode::io_error, cases_file);
  return read_cases(in);
}

inline std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << v;
  return s.str();
}

inline int eval(const CliConfig& c, int folds, int per_disease, const std::string& cases_file, const std::string& csv,
                std::ostream& out) {
  const auto fc = load_file_config(c);
  auto ctx = load_context(c, fc);
  const auto cases = load_or_generate(ctx->kb(), cases_file, per_disease, c.seed);
  const auto rep = run_kfold(cases, ctx, fc.engine, folds, c.seed);
  if (!csv.empty()) write_output(csv, kfold_csv(rep, fc.engine), out);

  out << "Fold  Cases  Top-1   Top-3   Prec    Rec     F1      AvgQ\n";
  std::vector<double> t1, t3, p, r, f1;
  for (const auto& f : rep.folds) {
    const auto& m = f.metrics;
    out << std::setw(4) << f.fold << std::setw(7) << f.size << "  " << fmt(m.top1) << "  " << fmt(m.top3) << "  "
        << fmt(m.precision) << "  " << fmt(m.recall) << "  " << fmt(m.f1) << "  " << fmt(m.avg_questions, 2) << "\n";
    t1.push_back(m.top1), t3.push_back(m.top3), p.push_back(m.precision), r.push_back(m.recall), f1.push_back(m.f1);
  }
  auto row = [&](const char* name, const std::vector<double>& xs) {
    const auto s = summarize(xs);
    out << std::left << std::setw(10) << name << std::right << fmt(s.mean) << " ± " << fmt(s.std) << "\n";
  };
  out << "\nMetric    Mean ± Std. Dev.\n";
  row("Top-1", t1), row("Top-3", t3), row("Precision", p), row("Recall", r), row("F1", f1);
  const auto nb = nb_kfold(rep, folds);
  out << "\nNaive Bayes (TF-IDF) top-1 " << fmt(nb.top1) << ", F1 " << fmt(nb.f1) << "; engine top-1 "
      << fmt(rep.overall.top1) << ", F1 " << fmt(rep.overall.f1) << "\n";
  return 0;
}

inline int ablate(const CliConfig& c, const std::string& grid_name, const std::string& out_path, int per_disease,
                  const std::string& cases_file, std::ostream& out, std::ostream& err) {
  const auto grid = ablation_grid(grid_name);
  const auto fc = load_file_config(c);
  auto ctx = load_context(c, fc);
  const auto cases = load_or_generate(ctx->kb(), cases_file, per_disease, c.seed);
  const auto rows = run_ablation(grid, cases, ctx);
  write_output(out_path, ablation_csv(rows), out);
  if (!out_path.empty() && out_path != "-") err << rows.size() << " rows written to " << out_path << "\n";
  return 0;
}

}  // namespace cli_detail

/// Returns the process exit code: 0 ok, 1 failure, 2 usage error.
inline int run_cli(int argc, const char* const* argv, std::istream& in = std::cin, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CliConfig c;
  CLI::App app{"diagnosys: conversational diagnostic inference engine"};
  app.require_subcommand(1);
  auto common = [&](CLI::App* sub, bool live_capable = false) {
    sub->add_option("--kb", c.kb_dir, "Knowledge-base directory")->check(CLI::ExistingDirectory)->capture_default_str();
    sub->add_option("--config", c.config_file, "JSON config (engine keys, \"llm\" object)")->check(CLI::ExistingFile);
    if (live_capable)
      sub->add_option("--mode", c.mode, "offline or live (live reads DIAGNOSYS_LLM_TOKEN)")
          ->check(CLI::IsMember({"offline", "live"}))
          ->capture_default_str();
    sub->add_option("--seed", c.seed, "Seed for case generation and folds")->capture_default_str();
  };

  auto* chat = app.add_subcommand("chat", "Interactive console consultation");
  common(chat, true);

  std::string host = "127.0.0.1", cors = "*";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Run the HTTP consultation service");
  common(serve, true);
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Bind port")->check(CLI::Range(0, 65535))->capture_default_str();
  serve->add_option("--cors-origin", cors, "Allowed browser origin")->capture_default_str();

  std::string out_path;
  auto* kb = app.add_subcommand("kb", "Knowledge-base tools");
  kb->require_subcommand(1);
  auto* validate = kb->add_subcommand("validate", "Validate every disease document");
  common(validate);
  auto* similarity = kb->add_subcommand("similarity", "Pairwise Jaccard symptom similarity as CSV");
  common(similarity);
  similarity->add_option("--out", out_path, "Output CSV (default stdout)");

  int folds = 5, per_disease = kDefaultPerDisease;
  std::string cases_file;
  auto* ev = app.add_subcommand("eval", "k-fold evaluation on synthetic patients");
  common(ev);
  ev->add_option("--folds", folds, "Number of folds")->check(CLI::Range(2, 1000))->capture_default_str();
  ev->add_option("--per-disease", per_disease, "Cases per disease")->check(CLI::Range(1, 100000))->capture_default_str();
  ev->add_option("--cases", cases_file, "Replay cases from a JSON-lines file")->check(CLI::ExistingFile);
  ev->add_option("--out", out_path, "Also write per-fold CSV here");

  std::string grid = "table7";
  auto* ab = app.add_subcommand("ablate", "Run an ablation grid to CSV");
  common(ab);
  ab->add_option("--grid", grid, "table5, table6 or table7")
      ->check(CLI::IsMember({"table5", "table6", "table7"}))
      ->capture_default_str();
  ab->add_option("--out", out_path, "Output CSV (default stdout)");
  ab->add_option("--per-disease", per_disease, "Cases per disease")->check(CLI::Range(1, 100000))->capture_default_str();
  ab->add_option("--cases", cases_file, "Replay cases from a JSON-lines file")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*chat) return cli_detail::chat(c, in, out, err);
    if (*serve) return cli_detail::serve(c, host, port, cors, err);
    if (*validate) return cli_detail::kb_validate(c, out, err);
    if (*similarity) {
      cli_detail::write_output(out_path, similarity_csv(similarity_matrix(load_knowledge_base(c.kb_dir))), out);
      return 0;
    }
    if (*ev) return cli_detail::eval(c, folds, per_disease, cases_file, out_path, out);
    if (*ab) return cli_detail::ablate(c, grid, out_path, per_disease, cases_file, out, err);
  } catch (const cli_detail::UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace diagnosys
