#include "semlogue/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "semlogue/corpus.hpp"
#include "semlogue/gradcheck.hpp"
#include "semlogue/rng.hpp"
#include "semlogue/synthetic.hpp"
#include "semlogue/trainer.hpp"

namespace semlogue::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GradcheckFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string kebab(std::string s) {
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

// Leaves of a config tree, addressed by key path.
struct Leaf {
  std::vector<std::string> path;
  std::string flag;
  std::string value;
};

void collect_leaves(const json& j, std::vector<std::string>& prefix, std::vector<Leaf>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    prefix.push_back(it.key());
    if (it->is_object()) {
      collect_leaves(*it, prefix, out);
    } else {
      out.push_back({prefix, "", ""});
    }
    prefix.pop_back();
  }
}

json& at_path(json& j, const std::vector<std::string>& path) {
  json* cur = &j;
  for (const auto& k : path) cur = &(*cur)[k];
  return *cur;
}

json parse_like(const json& like, const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    if (like.is_boolean()) {
      if (text == "true" || text == "1" || text == "yes") return true;
      if (text == "false" || text == "0" || text == "no") return false;
      throw std::invalid_argument(text);
    }
    if (like.is_number_unsigned()) {
      if (!text.empty() && text[0] == '-') throw std::invalid_argument(text);
      const auto v = std::stoull(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return v;
    }
    if (like.is_number_integer()) {
      const auto v = std::stoll(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return v;
    }
    if (like.is_number_float()) {
      const auto v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return v;
    }
  } catch (const std::logic_error&) {
    throw UsageError("bad value \"" + text + "\" for " + what);
  }
  return text;
}

bool same_kind(const json& like, const json& v) {
  if (like.is_number()) return v.is_number() && (like.is_number_float() || !v.is_number_float());
  return like.type() == v.type();
}

void merge_config(json& base, const json& file, const std::string& where) {
  if (!file.is_object()) throw UsageError(where + ": config must be a JSON object");
  for (auto it = file.begin(); it != file.end(); ++it) {
    const std::string name = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw UsageError("unknown config key \"" + name + "\"");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_config(slot, *it, name);
    } else if (!same_kind(slot, *it)) {
      throw UsageError("config key \"" + name + "\" has the wrong type");
    } else if (slot.is_number_unsigned() && it->is_number_integer() && it->get<long long>() < 0) {
      throw UsageError("config key \"" + name + "\" must not be negative");
    } else {
      slot = *it;
    }
  }
}

// A subcommand whose options all come from a config tree: --config FILE plus
// one --kebab-path flag per leaf (and the bare --leaf-name when unambiguous).
class ConfiguredCommand {
 public:
  ConfiguredCommand(CLI::App& app, const std::string& name, const std::string& help, json defaults)
      : defaults_(std::move(defaults)) {
    cmd_ = app.add_subcommand(name, help);
    cmd_->add_option("--config", config_path_, "JSON config file; flags override it");
    std::vector<std::string> prefix;
    collect_leaves(defaults_, prefix, leaves_);
    std::map<std::string, int> short_count;
    for (const auto& l : leaves_) ++short_count[kebab(l.path.back())];
    for (auto& l : leaves_) {
      std::string full;
      for (const auto& k : l.path) full += (full.empty() ? "" : "-") + kebab(k);
      std::string names = "--" + full;
      const std::string bare = kebab(l.path.back());
      if (l.path.size() > 1 && short_count[bare] == 1) names += ",--" + bare;
      l.flag = full;
      const json& d = at_path(defaults_, l.path);
      cmd_->add_option(names, l.value, "default " + d.dump())->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
  }

  CLI::App* app() const { return cmd_; }
  bool chosen() const { return cmd_->parsed(); }

  json effective() const {
    json cfg = defaults_;
    if (!config_path_.empty()) {
      std::ifstream in(config_path_);
      if (!in) throw DataError("cannot open config file " + config_path_);
      json file;
      try {
        file = json::parse(in);
      } catch (const json::exception& e) {
        throw DataError("config file " + config_path_ + " is not valid JSON: " + e.what());
      }
      merge_config(cfg, file, "");
    }
    for (const auto& l : leaves_) {
      if (cmd_->count("--" + l.flag) == 0) continue;
      json& slot = at_path(cfg, l.path);
      slot = parse_like(slot, l.value, "--" + l.flag);
    }
    return cfg;
  }

 private:
  json defaults_;
  CLI::App* cmd_ = nullptr;
  std::string config_path_;
  std::vector<Leaf> leaves_;
};

json scoring_defaults() {
  const ContanicWeights cw;
  const DialuationWeights dw;
  return {{"alpha", cw.alpha}, {"beta", cw.beta}, {"delta_c", dw.delta_c}, {"delta_ss", dw.delta_ss},
          {"provider", provider_config_to_json(ProviderConfig{})}};
}

EvalWeights eval_weights(const json& cfg) {
  EvalWeights w;
  w.contanic = {cfg["alpha"].get<double>(), cfg["beta"].get<double>()};
  w.dialuation = {cfg["delta_c"].get<double>(), cfg["delta_ss"].get<double>()};
  w.strip_context_tags = cfg["provider"]["strip_tags"].get<bool>();
  w.contanic.validate();
  return w;
}

bool is_bleu(const std::string& metric) { return metric.rfind("bleu", 0) == 0; }

// BLEU columns are shown on a 0-100 scale.
void print_metric(std::ostream& out, const std::string& name, double value) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << name << '\t' << std::fixed << std::setprecision(6) << (is_bleu(name) ? 100.0 * value : value) << '\n';
  out.flags(flags);
  out.precision(prec);
}

struct Splits {
  std::vector<TrainingExample> train, validation, test;
};

std::vector<Dialogue> load_corpus(const std::string& path) {
  if (path.empty()) throw UsageError("no corpus path given");
  if (!fs::exists(path)) throw DataError("corpus file " + path + " does not exist");
  auto loaded = load_jsonl(path);
  return std::move(loaded.dialogues);
}

Splits split_examples(const std::vector<Dialogue>& dialogues, std::uint64_t seed, std::size_t window) {
  const auto parts = split_dialogues(dialogues, seed);
  return {make_examples(parts.train, window), make_examples(parts.validation, window),
          make_examples(parts.test, window)};
}

std::vector<TrainingExample> select_split(const std::vector<Dialogue>& dialogues, const std::string& split,
                                          std::uint64_t seed, std::size_t window) {
  if (split == "all") return make_examples(dialogues, window);
  auto parts = split_examples(dialogues, seed, window);
  if (split == "train") return parts.train;
  if (split == "validation") return parts.validation;
  if (split == "test") return parts.test;
  throw UsageError("split must be all, train, validation or test, got \"" + split + "\"");
}

// ---- convert ----

json convert_defaults() {
  return {{"format", "synthetic"}, {"input", ""}, {"output", "corpus.jsonl"}, {"dialogues", 500}, {"seed", 17}};
}

std::vector<Dialogue> convert_multiwoz_path(const fs::path& input) {
  if (fs::is_regular_file(input)) {
    std::ifstream in(input);
    try {
      return convert_multiwoz(json::parse(in));
    } catch (const json::exception& e) {
      throw DataError(input.string() + " is not valid JSON: " + e.what());
    }
  }
  // release directory: every JSON file holding an array of dialogues
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(input)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Dialogue> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw DataError(f.string() + " is not valid JSON: " + e.what());
    }
    if (!j.is_array()) continue;  // schema.json, dialog_acts.json
    for (auto& d : convert_multiwoz(j)) out.push_back(std::move(d));
  }
  if (out.empty()) throw DataError("no MultiWOZ dialogues found under " + input.string());
  return out;
}

int do_convert(const json& cfg, std::ostream& out) {
  const auto format = cfg["format"].get<std::string>();
  const fs::path input = cfg["input"].get<std::string>();
  std::vector<Dialogue> dialogues;
  if (format == "synthetic") {
    dialogues = synthetic_paraphrase_corpus(cfg["dialogues"].get<std::size_t>(), cfg["seed"].get<std::uint64_t>());
  } else if (format == "multiwoz" || format == "personachat") {
    if (input.empty()) throw UsageError(format + " conversion needs --input");
    if (!fs::exists(input)) throw DataError("input " + input.string() + " does not exist");
    if (format == "multiwoz") {
      dialogues = convert_multiwoz_path(input);
    } else {
      std::ifstream in(input);
      if (!in) throw DataError("cannot open " + input.string());
      dialogues = convert_personachat(in);
    }
  } else {
    throw UsageError("format must be synthetic, multiwoz or personachat, got \"" + format + "\"");
  }
  write_jsonl(cfg["output"].get<std::string>(), dialogues);
  out << "wrote " << dialogues.size() << " dialogues to " << cfg["output"].get<std::string>() << '\n';
  return kOk;
}

// ---- train ----

json train_defaults() {
  json model = model_config_to_json(ModelConfig{});
  model.erase("vocab_size");  // taken from the vocabulary
  return {{"corpus", ""},
          {"out_dir", "run"},
          {"split_seed", 17},
          {"min_freq", 2},
          {"max_vocab", 8000},
          {"resume", ""},
          {"log_every", 10},
          {"evaluate_test", true},
          {"model", model},
          {"train", train_config_to_json(TrainConfig{})}};
}

int do_train(const json& cfg, std::ostream& out, std::ostream& log) {
  const TrainConfig tc = train_config_from_json(cfg["train"]);
  tc.validate();
  const auto dialogues = load_corpus(cfg["corpus"].get<std::string>());
  const auto splits = split_examples(dialogues, cfg["split_seed"].get<std::uint64_t>(), tc.window);
  if (splits.train.empty()) throw DataError("training split has no examples");
  const Vocab vocab = build_vocab(splits.train, cfg["max_vocab"].get<std::size_t>(), cfg["min_freq"].get<std::size_t>());
  const auto train = encode_examples(splits.train, vocab);
  const auto val = encode_examples(splits.validation, vocab);
  const auto test = encode_examples(splits.test, vocab);

  const fs::path out_dir = cfg["out_dir"].get<std::string>();
  fs::create_directories(out_dir);
  {
    std::ofstream f(out_dir / "config.json");
    f << cfg.dump(2) << '\n';
  }

  std::optional<Checkpoint> resume;
  if (const auto path = cfg["resume"].get<std::string>(); !path.empty()) resume = load_checkpoint(path, &vocab);
  ModelConfig mc;
  if (resume) {
    mc = resume->model_config;
  } else {
    json mj = cfg["model"];
    mj["vocab_size"] = vocab.size();
    mc = model_config_from_json(mj);
  }
  mc.validate();
  Model model(mc);
  Trainer trainer(tc, model, vocab);
  if (resume) {
    trainer.restore(*resume);
    log << "resumed at step " << resume->step << " (epoch " << resume->epoch << ")\n";
  }
  log << "vocab " << vocab.size() << ", examples train " << train.size() << " / validation " << val.size()
      << " / test " << test.size() << ", parameters " << model.parameter_count() << '\n';

  const auto ckpt_path = out_dir / "checkpoint.bin";
  const std::size_t every = std::max<std::size_t>(1, cfg["log_every"].get<std::size_t>());
  trainer.on_step = [&](const StepLog& s) {
    if (s.step % every == 0) {
      log << "step " << s.step << " epoch " << s.epoch << " loss " << s.loss.l_total << " ce " << s.loss.l_ce
          << " contanic " << s.loss.contanic << '\n';
    }
  };
  trainer.on_epoch = [&](const EpochLog& e) {
    save_checkpoint(trainer.checkpoint(), ckpt_path);
    log << "epoch " << e.epoch << " done in " << e.wall_seconds << " s";
    if (e.validation) log << ", validation dialuation " << e.validation->mean("dialuation");
    log << '\n';
  };

  RunLog run_log;
  try {
    trainer.train(train, val, run_log);
  } catch (const NumericError& e) {
    std::ofstream f(out_dir / "numeric_failure.json");
    f << e.dump().dump(2) << '\n';
    throw;
  }
  save_checkpoint(trainer.checkpoint(), ckpt_path);
  {
    std::ofstream f(out_dir / "runlog.jsonl", resume ? std::ios::app : std::ios::trunc);
    f << run_log.to_jsonl();
  }
  out << "checkpoint\t" << ckpt_path.string() << '\n' << "steps\t" << trainer.step_count() << '\n';

  if (cfg["evaluate_test"].get<bool>() && !test.empty()) {
    EvalOptions eo;
    eo.weights = {tc.loss.weights, tc.dialuation, tc.provider.strip_tags};
    eo.max_len = tc.eval_max_len;
    const auto items = generate_responses(model, vocab, test, eo.max_len, eo.batch_size);
    write_generations(out_dir / "test_generations.jsonl", items);
    const auto report = evaluate_generations(items, trainer.provider(), eo.weights);
    write_score_report(report, out_dir / "test_report.json", out_dir / "test_report.csv");
    for (const auto& name : report.metric_names) print_metric(out, "test_" + name, report.mean(name));
  }
  return kOk;
}

// ---- generate ----

json generate_defaults() {
  return {{"checkpoint", ""}, {"input", ""},       {"output", "generations.jsonl"},
          {"split", "all"},   {"split_seed", 17}, {"max_len", 64},
          {"batch_size", 32}};
}

int do_generate(const json& cfg, std::ostream& out) {
  const auto ckpt_path = cfg["checkpoint"].get<std::string>();
  if (ckpt_path.empty()) throw UsageError("generate needs --checkpoint");
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Vocab vocab = Vocab::from_tokens(ckpt.vocab_tokens);
  const Model model = model_from_checkpoint(ckpt);
  const auto dialogues = load_corpus(cfg["input"].get<std::string>());
  const auto examples = select_split(dialogues, cfg["split"].get<std::string>(),
                                     cfg["split_seed"].get<std::uint64_t>(), ckpt.train_config.window);
  const auto max_len = std::min(cfg["max_len"].get<std::size_t>(), model.config().max_target_len);
  const auto items = generate_responses(model, vocab, encode_examples(examples, vocab), max_len,
                                        std::max<std::size_t>(1, cfg["batch_size"].get<std::size_t>()));
  write_generations(cfg["output"].get<std::string>(), items);
  out << "wrote " << items.size() << " generations to " << cfg["output"].get<std::string>() << '\n';
  return kOk;
}

// ---- evaluate / score ----

struct ProviderHolder {
  std::optional<Model> model;
  std::optional<Vocab> vocab;
  std::unique_ptr<EmbeddingProvider> provider;
};

ProviderHolder provider_for(const json& cfg, const std::string& checkpoint) {
  ProviderHolder h;
  const ProviderConfig pc = provider_config_from_json(cfg["provider"]);
  if (pc.kind == ProviderKind::kIntrinsic) {
    if (checkpoint.empty()) throw UsageError("the intrinsic provider needs --checkpoint");
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    h.vocab = Vocab::from_tokens(ckpt.vocab_tokens);
    h.model = model_from_checkpoint(ckpt);
  }
  h.provider = make_provider(pc, h.model ? &*h.model : nullptr, h.vocab ? &*h.vocab : nullptr);
  return h;
}

json evaluate_defaults() {
  json d = scoring_defaults();
  d["input"] = "";
  d["output_json"] = "report.json";
  d["output_csv"] = "report.csv";
  d["checkpoint"] = "";
  return d;
}

int do_evaluate(const json& cfg, std::ostream& out) {
  const auto input = cfg["input"].get<std::string>();
  if (input.empty()) throw UsageError("evaluate needs --input");
  if (!fs::exists(input)) throw DataError("generations file " + input + " does not exist");
  const auto items = load_generations(input);
  const auto holder = provider_for(cfg, cfg["checkpoint"].get<std::string>());
  const auto report = evaluate_generations(items, *holder.provider, eval_weights(cfg));
  write_score_report(report, cfg["output_json"].get<std::string>(), cfg["output_csv"].get<std::string>());
  for (const auto& name : report.metric_names) print_metric(out, name, report.mean(name));
  print_metric(out, "distinct1", report.distinct_1);
  print_metric(out, "distinct2", report.distinct_2);
  out << "count\t" << report.count << '\n';
  return kOk;
}

json score_defaults() {
  json d = scoring_defaults();
  d["context"] = "";
  d["gold"] = "";
  d["generated"] = "";
  d["checkpoint"] = "";
  return d;
}

int do_score(const json& cfg, std::ostream& out) {
  const std::vector<ScoreInput> items{
      {cfg["context"].get<std::string>(), cfg["gold"].get<std::string>(), cfg["generated"].get<std::string>()}};
  const auto holder = provider_for(cfg, cfg["checkpoint"].get<std::string>());
  const auto report = evaluate_generations(items, *holder.provider, eval_weights(cfg));
  for (const auto& name : report.metric_names) print_metric(out, name, report.mean(name));
  return kOk;
}

// ---- gradcheck ----

json gradcheck_defaults() {
  return {{"variant", "semtextuallogue"}, {"seed", 1},         {"vocab_size", 50}, {"embed_dim", 16},
          {"layers", 1},                  {"ff_dim", 32},      {"heads", 2},       {"batch", 3},
          {"architecture", "encoder-decoder"},                 {"eps", 1e-5},      {"tolerance", 1e-4},
          {"contanic", 0.4}};
}

int do_gradcheck(const json& cfg, std::ostream& out) {
  LossConfig lc;
  lc.variant = parse_loss_variant(cfg["variant"].get<std::string>());
  const auto seed = cfg["seed"].get<std::uint64_t>();
  json mj = {{"vocab_size", cfg["vocab_size"]},
             {"embed_dim", cfg["embed_dim"]},
             {"encoder_layers", cfg["layers"]},
             {"decoder_layers", cfg["layers"]},
             {"heads", cfg["heads"]},
             {"ff_dim", cfg["ff_dim"]},
             {"max_source_len", 16},
             {"max_target_len", 16},
             {"architecture", cfg["architecture"]},
             {"seed", seed}};
  const ModelConfig mc = model_config_from_json(mj);
  mc.validate();
  if (mc.vocab_size <= Vocab::reserved_tokens().size()) throw UsageError("vocab-size must exceed the reserved block");
  Model model(mc);
  BaselineEstimator estimator(mc.vocab_size, derive_seed(seed, 1));
  const BaselineEstimator frozen = estimator;

  Rng rng(derive_seed(seed, 2));
  const auto rows = std::max<std::size_t>(1, cfg["batch"].get<std::size_t>());
  const auto first = static_cast<int>(Vocab::reserved_tokens().size());
  const auto span = mc.vocab_size - Vocab::reserved_tokens().size();
  std::vector<std::vector<int>> src(rows), gold(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    src[r].resize(2 + rng.below(5));
    gold[r].resize(1 + rng.below(4));
    for (int& x : src[r]) x = first + static_cast<int>(rng.below(span));
    for (int& x : gold[r]) x = first + static_cast<int>(rng.below(span));
  }
  const auto sb = make_source_batch(src, mc.max_source_len);
  const auto tb = make_target_batch(gold, mc.max_target_len);
  const std::vector<double> contanic(rows, cfg["contanic"].get<double>());

  auto params = model.parameter_ptrs();
  if (uses_estimator(lc.variant)) {
    for (auto* p : estimator.parameter_ptrs()) params.push_back(p);
  }
  const auto report = grad_check(
      [&](Tape& t) { return compute_loss(t, model, &estimator, sb, tb, lc, contanic, &frozen).total; }, params,
      cfg["eps"].get<double>(), cfg["tolerance"].get<double>());
  out << "param\tchecked\texcluded\tmax_abs\tmax_rel\n";
  for (const auto& p : report.params) {
    out << p.name << '\t' << p.checked << '\t' << p.excluded << '\t' << p.max_abs_diff << '\t' << p.max_rel_diff
        << '\n';
  }
  out << "max_rel_err\t" << report.max_rel_diff << '\n' << "passed\t" << (report.passed ? "true" : "false") << '\n';
  if (!report.passed) {
    throw GradcheckFailed("gradcheck failed: max relative error " + std::to_string(report.max_rel_diff) +
                          " >= " + std::to_string(report.tolerance));
  }
  return kOk;
}

// ---- serve-echo-embedder ----

json serve_defaults() { return {{"host", "127.0.0.1"}, {"port", 8765}, {"dim", 1 << 16}}; }

int do_serve(const json& cfg, std::ostream& out) {
  EchoEmbeddingServer server(cfg["dim"].get<std::size_t>());
  const auto port = cfg["port"].get<int>();
  if (port < 0 || port > 65535) throw UsageError("port out of range");
  server.start(cfg["host"].get<std::string>(), port);
  out << "serving " << server.endpoint() << std::endl;
  for (;;) std::this_thread::sleep_for(std::chrono::hours(1));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& log) {
  CLI::App app("Dialogue response training with semantic losses", "semlogue");
  app.require_subcommand(1);
  ConfiguredCommand convert(app, "convert", "raw dataset -> corpus JSONL", convert_defaults());
  ConfiguredCommand train(app, "train", "train a model; writes checkpoint, run log and test report",
                          train_defaults());
  ConfiguredCommand generate(app, "generate", "greedy responses for a corpus -> generations JSONL",
                             generate_defaults());
  ConfiguredCommand evaluate(app, "evaluate", "score a generations file -> report JSON/CSV", evaluate_defaults());
  ConfiguredCommand score(app, "score", "all metrics for one context/gold/generated triple", score_defaults());
  ConfiguredCommand gradcheck(app, "gradcheck", "finite-difference check of a loss variant on a micro model",
                              gradcheck_defaults());
  ConfiguredCommand serve(app, "serve-echo-embedder", "hashed-embedding HTTP server", serve_defaults());

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, log);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    for (auto* cmd : {&convert, &train, &generate, &evaluate, &score, &gradcheck, &serve}) {
      if (!cmd->chosen()) continue;
      const json cfg = cmd->effective();
      log << "config " << cmd->app()->get_name() << ' ' << cfg.dump() << std::endl;
      if (cmd == &convert) return do_convert(cfg, out);
      if (cmd == &train) return do_train(cfg, out, log);
      if (cmd == &generate) return do_generate(cfg, out);
      if (cmd == &evaluate) return do_evaluate(cfg, out);
      if (cmd == &score) return do_score(cfg, out);
      if (cmd == &gradcheck) return do_gradcheck(cfg, out);
      return do_serve(cfg, out);
    }
  } catch (const UsageError& e) {
    log << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    log << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const NumericError& e) {
    log << "numeric failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const GradcheckFailed& e) {
    log << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsageError;
}

}  // namespace semlogue::cli
