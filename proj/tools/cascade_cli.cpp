// cascade_cli: train an n-gram scorer, decode, sweep, benchmark and serve.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cascade.hpp"

namespace {

using namespace cascade;

constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::unique_ptr<PotentialProvider> open_scorer(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw UsageError("scorer must be ngram:<path>, file:<path> or stream:<host:port>");
  const auto kind = spec.substr(0, colon);
  const auto arg = spec.substr(colon + 1);
  if (kind == "ngram") return std::make_unique<NgramModel>(NgramModel::load(arg));
  if (kind == "file") return std::make_unique<TableProvider>(load_potentials(arg));
  if (kind == "stream") return stream_scorer(arg);
  throw UsageError("unknown scorer kind '" + kind + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& flag, const std::string& text) {
  std::vector<T> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    const auto v = parse_int<T>(item);
    if (!v) throw UsageError(flag + ": bad list item '" + item + "'");
    out.push_back(*v);
  }
  if (out.empty()) throw UsageError(flag + ": empty list");
  return out;
}

// Source sentences; words outside the scorer's vocabulary reach it as <eps>.
struct Source {
  Tokens context;
  std::size_t length = 0;
};

std::vector<Source> read_sources(const std::string& text, const std::string& input, const Vocabulary& vocab) {
  std::vector<std::string> lines;
  if (!text.empty()) lines.push_back(text);
  if (!input.empty()) {
    std::ifstream in(input);
    if (!in) throw Error("cannot open " + input);
    for (std::string line; std::getline(in, line);)
      if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
  }
  if (lines.empty()) throw UsageError("no input: pass --text or --input");
  std::vector<Source> out;
  for (const auto& line : lines) {
    Source s;
    std::istringstream words(line);
    for (std::string w; words >> w;) s.context.push_back(vocab.contains(w) ? vocab.id(w) : vocab.epsilon_id());
    s.length = s.context.size() + 1;
    out.push_back(std::move(s));
  }
  return out;
}

struct DecodeFlags {
  std::string scorer;
  std::string text;
  std::string input;
  std::size_t length = 0;
  double slope = 1.0;
  double intercept = 0.0;
  std::string criterion = "mm";
  unsigned threads = 1;

  void add(CLI::App* app) {
    app->add_option("--scorer", scorer, "ngram:<path> | file:<path> | stream:<host:port>")->required();
    app->add_option("--text", text, "one source sentence");
    app->add_option("--input", input, "file with one source sentence per line");
    app->add_option("--length", length, "fixed target length including eos (overrides the length rule)")
        ->check(CLI::PositiveNumber);
    app->add_option("--slope", slope, "length rule: L = round(slope * source_length + intercept)");
    app->add_option("--intercept", intercept);
    app->add_option("--criterion", criterion, "pruning criterion")->check(CLI::IsMember({"mm", "ngram"}));
    app->add_option("--threads", threads, "threads per tree scan")->check(CLI::PositiveNumber);
  }

  DecodeConfig config() const {
    DecodeConfig cfg;
    cfg.length_rule = {slope, intercept};
    if (length > 0) cfg.fixed_length = length;
    cfg.criterion = criterion == "ngram" ? PruneCriterion::kNgramScore : PruneCriterion::kMaxMarginal;
    cfg.tree.threads = threads;
    return cfg;
  }
};

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  return out;
}

int cmd_train(int order, double add_k, const std::string& corpus_path, const std::string& out_path) {
  const auto model = train_ngram(read_corpus(corpus_path), order, add_k);
  model.save(out_path);
  std::cout << "vocab=" << model.vocab().size() << " sentences=" << model.sentences() << '\n';
  return 0;
}

int cmd_decode(const DecodeFlags& f, std::size_t k, int iters, std::size_t delta_l, std::size_t beam,
               const std::string& report_path) {
  auto scorer = open_scorer(f.scorer);
  auto cfg = f.config();
  cfg.k_limit = k;
  cfg.iterations = iters;
  cfg.delta_l = delta_l;
  cfg.validate(*scorer);
  const auto sources = read_sources(f.text, f.input, scorer->vocab());
  std::ofstream report;
  if (!report_path.empty()) report = open_out(report_path);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto& s = sources[i];
    const auto r = beam > 0 ? beam_decode(s.context, s.length, *scorer, cfg, beam)
                            : decode(s.context, s.length, *scorer, cfg);
    std::cout << "score=" << format_double(r.log_score) << "\ttokens=" << scorer->vocab().decode(r.tokens) << '\n';
    if (report.is_open()) {
      auto rep = make_report(r, scorer->vocab(), cfg);
      rep.sentence = i;
      report << rep.to_line() << '\n';
    }
  }
  return 0;
}

int cmd_sweep(const DecodeFlags& f, const std::string& ks, const std::string& iters, const std::string& deltas,
              bool oracle, unsigned jobs, const std::string& out_path) {
  SweepGrid grid{parse_list<std::size_t>("--k", ks), parse_list<int>("--iters", iters),
                 parse_list<std::size_t>("--delta-l", deltas)};
  auto scorer = open_scorer(f.scorer);
  std::vector<SweepSource> sources;
  for (auto& s : read_sources(f.text, f.input, scorer->vocab())) sources.push_back({std::move(s.context), s.length});
  SweepOptions opt;
  opt.base = f.config();
  opt.oracle = oracle;
  opt.jobs = jobs;
  const auto rows = sweep(sources, *scorer, grid, opt);
  std::ofstream file;
  if (!out_path.empty()) file = open_out(out_path);
  std::ostream& out = file.is_open() ? file : std::cout;
  std::size_t failed = 0;
  for (const auto& r : rows) {
    out << r.to_line() << '\n';
    if (!r.error.empty()) {
      ++failed;
      std::cerr << "cell failed: " << r.error << '\n';
    }
  }
  return failed == rows.size() ? kRuntimeError : 0;
}

int cmd_bench(std::size_t edges, std::size_t states, std::size_t chains, std::uint64_t seed, unsigned threads) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  double ms_tree = 0, ms_serial = 0, worst = 0;
  ScanTrace trace;
  for (std::size_t c = 0; c < chains; ++c) {
    ChainScores chain(edges, states);
    for (std::size_t e = 0; e < edges; ++e)
      for (std::size_t a = 0; a < states; ++a)
        for (std::size_t b = 0; b < states; ++b) chain.set(e, a, b, u(rng));
    auto t = std::chrono::steady_clock::now();
    const auto [tree, tr] = tree_max_marginals(chain, {threads});
    ms_tree += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t).count();
    t = std::chrono::steady_clock::now();
    const auto serial = serial_max_marginals(chain);
    ms_serial += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t).count();
    trace = tr;
    for (std::size_t e = 0; e < edges; ++e)
      for (std::size_t a = 0; a < states; ++a)
        for (std::size_t b = 0; b < states; ++b) worst = std::max(worst, std::abs(tree.at(e, a, b) - serial.at(e, a, b)));
  }
  std::cout << "edges=" << edges << "\tstates=" << states << "\tchains=" << chains << "\tseed=" << seed
            << "\tlevels_up=" << trace.levels_up << "\tlevels_down=" << trace.levels_down
            << "\tcell_ops=" << trace.cell_ops << "\tms_tree=" << format_double(ms_tree)
            << "\tms_serial=" << format_double(ms_serial) << "\tmax_abs_diff=" << format_double(worst) << '\n';
  return worst <= 1e-9 ? 0 : kRuntimeError;
}

int cmd_validate(const std::string& path) {
  const auto t = load_potentials(path);
  std::cout << "ok vocab=" << t.vocab().size() << " orders=" << t.max_order() << " length=" << t.length()
            << " records=" << t.size() << '\n';
  return 0;
}

int cmd_export(const std::string& scorer_spec, std::size_t length, int orders, const std::string& out_path) {
  auto scorer = open_scorer(scorer_spec);
  save_potentials(*scorer, length, orders, out_path);
  return 0;
}

int cmd_serve(const std::string& scorer_spec, std::uint16_t port, std::size_t connections) {
  auto scorer = open_scorer(scorer_spec);
  StreamServer server(*scorer, port);
  std::cout << "listening " << server.endpoint() << std::endl;
  server.serve(connections);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascaded decoding for bounded-order linear-chain CRFs"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train-ngram", "train an add-k n-gram scorer");
  int order = 3;
  double add_k = 0.1;
  std::string corpus, model_out;
  train->add_option("--order", order, "n-gram order (max Markov order + 1)")->check(CLI::Range(1, 16));
  train->add_option("--add-k", add_k, "additive smoothing")->check(CLI::PositiveNumber);
  train->add_option("corpus", corpus, "one whitespace-tokenized sentence per line")->required();
  train->add_option("out", model_out)->required();

  DecodeFlags dec_flags;
  std::size_t k = 16, delta_l = 0;
  int iters = 2;
  std::string report;
  auto* dec = app.add_subcommand("decode", "cascaded decode of each source sentence");
  dec_flags.add(dec);
  dec->add_option("--k", k, "spans kept per position")->check(CLI::PositiveNumber);
  dec->add_option("--iters", iters, "cascade iterations (max Markov order + 1)")->check(CLI::PositiveNumber);
  dec->add_option("--delta-l", delta_l, "length window half-width");
  dec->add_option("--report", report, "write one report row per sentence");

  DecodeFlags beam_flags;
  std::size_t width = 5;
  int beam_iters = 2;
  std::size_t beam_delta = 0;
  std::string beam_report;
  auto* beam = app.add_subcommand("beam", "left-to-right beam search over the same scorer");
  beam_flags.add(beam);
  beam->add_option("--beam", width, "beam width")->check(CLI::PositiveNumber);
  beam->add_option("--iters", beam_iters, "Markov order + 1 of the objective")->check(CLI::PositiveNumber);
  beam->add_option("--delta-l", beam_delta);
  beam->add_option("--report", beam_report);

  DecodeFlags sweep_flags;
  std::string ks = "16", iter_list = "2", deltas = "0", sweep_out;
  bool oracle = false;
  unsigned jobs = 1;
  auto* sw = app.add_subcommand("sweep", "decode under every {K, iterations, delta-l} cell");
  sweep_flags.add(sw);
  sw->add_option("--k", ks, "comma-separated K values");
  sw->add_option("--iters", iter_list, "comma-separated iteration counts");
  sw->add_option("--delta-l", deltas, "comma-separated window half-widths");
  sw->add_flag("--oracle", oracle, "add the exhaustive optimum (tiny instances only)");
  sw->add_option("--jobs", jobs, "cells decoded concurrently")->check(CLI::PositiveNumber);
  sw->add_option("--out", sweep_out, "write rows here instead of standard output");

  std::size_t edges = 64, states = 8, chains = 100;
  std::uint64_t seed = 1;
  unsigned bench_threads = 1;
  auto* bench = app.add_subcommand("bench", "time the tree scan against the serial recursion");
  bench->add_option("--edges", edges)->check(CLI::PositiveNumber);
  bench->add_option("--states", states)->check(CLI::PositiveNumber);
  bench->add_option("--chains", chains)->check(CLI::PositiveNumber);
  bench->add_option("--seed", seed);
  bench->add_option("--threads", bench_threads)->check(CLI::PositiveNumber);

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "check a potential file");
  validate->add_option("file", validate_path)->required();

  std::string export_scorer, export_out;
  std::size_t export_length = 0;
  int export_orders = 1;
  auto* exp = app.add_subcommand("export", "tabulate a scorer into a potential file");
  exp->add_option("--scorer", export_scorer)->required();
  exp->add_option("--length", export_length, "lattice length")->required()->check(CLI::PositiveNumber);
  exp->add_option("--orders", export_orders, "highest order to tabulate")->check(CLI::NonNegativeNumber);
  exp->add_option("out", export_out)->required();

  std::string serve_scorer;
  std::uint16_t port = 0;
  std::size_t connections = 0;
  auto* serve = app.add_subcommand("serve", "answer the stream protocol on 127.0.0.1");
  serve->add_option("--scorer", serve_scorer)->required();
  serve->add_option("--port", port, "0 picks a free port");
  serve->add_option("--connections", connections, "exit after this many clients (0: never)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*train) return cmd_train(order, add_k, corpus, model_out);
    if (*dec) return cmd_decode(dec_flags, k, iters, delta_l, 0, report);
    if (*beam) {
      // beam and cascade share the length window; K has no meaning here
      return cmd_decode(beam_flags, 1, beam_iters, beam_delta, width, beam_report);
    }
    if (*sw) return cmd_sweep(sweep_flags, ks, iter_list, deltas, oracle, jobs, sweep_out);
    if (*bench) return cmd_bench(edges, states, chains, seed, bench_threads);
    if (*validate) return cmd_validate(validate_path);
    if (*exp) return cmd_export(export_scorer, export_length, export_orders, export_out);
    if (*serve) return cmd_serve(serve_scorer, port, connections);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUsageError;
}
