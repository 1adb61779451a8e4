#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "json.hpp"
#include "semlogue/cli.hpp"
#include "semlogue/corpus.hpp"
#include "semlogue/metrics.hpp"
#include "semlogue/model.hpp"
#include "semlogue/synthetic.hpp"
#include "semlogue/trainer.hpp"

namespace py = pybind11;
using namespace semlogue;
using nlohmann::json;

namespace {

// Greedy responder over a saved checkpoint.
class Generator {
 public:
  explicit Generator(const std::string& checkpoint) : Generator(load_checkpoint(checkpoint)) {}

  std::vector<std::string> respond(const std::vector<std::string>& contexts, std::size_t max_len) const {
    std::vector<TrainingExample> raw;
    for (const auto& c : contexts) raw.push_back({c, "", "", 0});
    const auto ex = encode_examples(raw, vocab_);
    std::vector<std::string> out;
    for (auto& item : generate_responses(*model_, vocab_, ex, std::min(max_len, model_->config().max_target_len))) {
      out.push_back(std::move(item.generated));
    }
    return out;
  }

  std::size_t vocab_size() const { return vocab_.size(); }
  const std::string& config_json() const { return config_; }

 private:
  explicit Generator(const Checkpoint& ckpt)
      : vocab_(Vocab::from_tokens(ckpt.vocab_tokens)),
        model_(std::make_unique<Model>(model_from_checkpoint(ckpt))),
        config_(model_config_to_json(ckpt.model_config).dump()) {}

  Vocab vocab_;
  std::unique_ptr<Model> model_;
  std::string config_;
};

std::string evaluate_json(const std::string& items_json, const std::string& options_json) {
  const auto items_j = json::parse(items_json);
  const auto opt = json::parse(options_json);
  std::vector<ScoreInput> items;
  for (const auto& it : items_j) {
    items.push_back({it.at("context").get<std::string>(), it.at("gold").get<std::string>(),
                     it.at("generated").get<std::string>()});
  }
  EvalWeights w;
  w.contanic = {opt.value("alpha", w.contanic.alpha), opt.value("beta", w.contanic.beta)};
  w.dialuation = {opt.value("delta_c", w.dialuation.delta_c), opt.value("delta_ss", w.dialuation.delta_ss)};
  w.strip_context_tags = opt.value("strip_tags", true);
  const HashedProvider provider(opt.value("dim", std::size_t{1} << 16));
  return score_report_to_json(evaluate_generations(items, provider, w)).dump();
}

std::string synthetic_corpus_json(std::size_t n, std::uint64_t seed) {
  json arr = json::array();
  for (const auto& d : synthetic_paraphrase_corpus(n, seed)) arr.push_back(dialogue_to_json(d));
  return arr.dump();
}

}  // namespace

PYBIND11_MODULE(_semlogue, m) {
  m.doc() = "Dialogue response training with semantic losses (C++ core)";

  m.def("tokenize", &tokenize, py::arg("text"));
  m.def("detokenize", [](const std::vector<std::string>& t) { return detokenize(t); }, py::arg("tokens"));
  m.def("strip_tags", &strip_tags, py::arg("text"));

  m.def(
      "bleu",
      [](const std::string& cand, const std::string& ref, std::size_t max_n) {
        const auto b = bleu(tokenize(cand), tokenize(ref), max_n);
        py::dict d;
        d["precision"] = std::vector<double>(b.precision.begin(), b.precision.begin() + max_n);
        d["brevity_penalty"] = b.brevity_penalty;
        d["bleu"] = b.cumulative;
        return d;
      },
      py::arg("candidate"), py::arg("reference"), py::arg("max_n") = 4);
  m.def(
      "rouge",
      [](const std::string& cand, const std::string& ref) {
        const auto r = rouge(tokenize(cand), tokenize(ref));
        py::dict d;
        d["rouge1"] = r.rouge1;
        d["rouge2"] = r.rouge2;
        d["rougeL"] = r.rouge_l;
        return d;
      },
      py::arg("candidate"), py::arg("reference"));
  m.def(
      "dialuation",
      [](double cr, double ss, double delta_c, double delta_ss) { return dialuation(cr, ss, {delta_c, delta_ss}); },
      py::arg("cr"), py::arg("ss"), py::arg("delta_c") = 0.3, py::arg("delta_ss") = 0.7);
  m.def(
      "distinct_n",
      [](const std::vector<std::string>& texts, std::size_t n) {
        std::vector<Tokens> toks;
        for (const auto& t : texts) toks.push_back(tokenize(t));
        return distinct_n(toks, n);
      },
      py::arg("texts"), py::arg("n"));
  m.def(
      "contanic", [](double cr, double ss, double alpha, double beta) { return contanic(cr, ss, {alpha, beta}); },
      py::arg("cr"), py::arg("ss"), py::arg("alpha") = 0.3, py::arg("beta") = 0.7);

  m.def("hashed_embed", [](const std::string& text, std::size_t dim) { return hashed_embed(text, dim); },
        py::arg("text"), py::arg("dim") = std::size_t{1} << 16);
  m.def("cosine", [](const std::vector<double>& a, const std::vector<double>& b) { return cosine(a, b); });

  m.def("_evaluate_json", &evaluate_json);
  m.def("_synthetic_corpus_json", &synthetic_corpus_json);
  m.def("synthetic_min_paraphrases", &synthetic_min_paraphrases);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, log;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, log);
        }
        return py::make_tuple(code, out.str(), log.str());
      },
      py::arg("args"), "Runs a CLI subcommand in-process; returns (exit_code, stdout, log).");

  py::class_<Generator>(m, "Generator")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def("respond", &Generator::respond, py::arg("contexts"), py::arg("max_len") = 64,
           py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("vocab_size", &Generator::vocab_size)
      .def_property_readonly("_config_json", &Generator::config_json);

  py::class_<EchoEmbeddingServer>(m, "EchoEmbeddingServer")
      .def(py::init<std::size_t>(), py::arg("dim") = std::size_t{1} << 16)
      .def("start", &EchoEmbeddingServer::start, py::arg("host") = "127.0.0.1", py::arg("port") = 0)
      .def("stop", &EchoEmbeddingServer::stop, py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("endpoint", &EchoEmbeddingServer::endpoint)
      .def_property_readonly("requests_served", &EchoEmbeddingServer::requests_served);

  py::register_exception<CorpusError>(m, "CorpusError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_ValueError);
}
