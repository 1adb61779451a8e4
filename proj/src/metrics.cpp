#include "semlogue/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "semlogue/corpus.hpp"

namespace semlogue {

using nlohmann::json;

void DialuationWeights::validate() const {
  if (!(delta_c >= 0.0) || !(delta_ss >= 0.0) || !(delta_c + delta_ss > 0.0)) {
    throw std::invalid_argument("dialuation weights need delta_c, delta_ss >= 0 and a positive sum");
  }
}

double dialuation(double cr, double ss, const DialuationWeights& weights) {
  weights.validate();
  return 100.0 * (weights.delta_c * cr + weights.delta_ss * ss) / (weights.delta_c + weights.delta_ss);
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(std::span<const std::string> toks, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return out;
}

// clipped matches between candidate and reference n-grams
std::size_t overlap(const NgramCounts& cand, const NgramCounts& ref) {
  std::size_t m = 0;
  for (const auto& [g, c] : cand) {
    auto it = ref.find(g);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

double f1(std::size_t match, std::size_t cand_total, std::size_t ref_total) {
  if (match == 0 || cand_total == 0 || ref_total == 0) return 0.0;
  const double p = static_cast<double>(match) / static_cast<double>(cand_total);
  const double r = static_cast<double>(match) / static_cast<double>(ref_total);
  return 2.0 * p * r / (p + r);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

BleuResult bleu(std::span<const std::string> candidate, std::span<const std::string> reference,
                std::size_t max_n) {
  if (max_n < 1 || max_n > 4) throw std::invalid_argument("bleu: max_n must be in 1..4");
  BleuResult r;
  if (candidate.empty()) {
    r.empty_candidate = true;
    return r;
  }
  const double c = static_cast<double>(candidate.size());
  const double ref_len = static_cast<double>(reference.size());
  r.brevity_penalty = c < ref_len ? std::exp(1.0 - ref_len / c) : 1.0;
  double log_sum = 0.0;
  std::size_t orders = 0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    if (candidate.size() < n) break;
    const auto cand = ngrams(candidate, n);
    const double total = static_cast<double>(candidate.size() - n + 1);
    const double p = static_cast<double>(overlap(cand, ngrams(reference, n))) / total;
    r.precision[n - 1] = p;
    log_sum += std::log(std::max(p, 1e-9));
    ++orders;
  }
  r.cumulative = r.brevity_penalty * std::exp(log_sum / static_cast<double>(orders));
  return r;
}

RougeResult rouge(std::span<const std::string> candidate, std::span<const std::string> reference) {
  RougeResult r;
  if (candidate.empty() || reference.empty()) {
    r.empty_input = true;
    return r;
  }
  for (std::size_t n : {1u, 2u}) {
    const auto cand = ngrams(candidate, n), ref = ngrams(reference, n);
    const std::size_t ct = candidate.size() >= n ? candidate.size() - n + 1 : 0;
    const std::size_t rt = reference.size() >= n ? reference.size() - n + 1 : 0;
    (n == 1 ? r.rouge1 : r.rouge2) = f1(overlap(cand, ref), ct, rt);
  }
  r.rouge_l = f1(lcs_length(candidate, reference), candidate.size(), reference.size());
  return r;
}

double distinct_n(std::span<const Tokens> candidates, std::size_t n) {
  if (n == 0) throw std::invalid_argument("distinct_n: n must be at least 1");
  std::set<std::vector<std::string>> unique;
  std::size_t total = 0;
  for (const auto& toks : candidates) {
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
      unique.emplace(toks.begin() + i, toks.begin() + i + n);
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(total);
}

const std::vector<std::string>& row_metric_names() {
  static const std::vector<std::string> names{"cr",     "ss",     "contanic", "dialuation", "bleu1",
                                              "bleu2",  "bleu3",  "bleu4",    "bleu",       "rouge1",
                                              "rouge2", "rougeL", "embedding"};
  return names;
}

std::vector<double> row_metric_values(const ScoreRow& r) {
  return {r.cr,        r.ss,        r.contanic, r.dialuation, r.bleu_n[0], r.bleu_n[1], r.bleu_n[2],
          r.bleu_n[3], r.bleu,      r.rouge1,   r.rouge2,     r.rouge_l,   r.embedding};
}

double ScoreReport::mean(const std::string& metric) const {
  for (std::size_t i = 0; i < metric_names.size(); ++i) {
    if (metric_names[i] == metric) return means[i];
  }
  if (metric == "distinct1") return distinct_1;
  if (metric == "distinct2") return distinct_2;
  throw std::out_of_range("no metric named " + metric);
}

void ScoreReport::recompute_means() {
  metric_names = row_metric_names();
  means.assign(metric_names.size(), 0.0);
  count = rows.size();
  if (rows.empty()) return;
  for (const auto& row : rows) {
    const auto v = row_metric_values(row);
    for (std::size_t i = 0; i < v.size(); ++i) means[i] += v[i];
  }
  for (double& m : means) m /= static_cast<double>(rows.size());
}

ScoreReport evaluate_generations(std::span<const ScoreInput> items, const EmbeddingProvider& provider,
                                 const EvalWeights& weights) {
  weights.contanic.validate();
  weights.dialuation.validate();
  ScoreReport report;
  if (!items.empty()) {
    const auto triples = score_batch(items, provider, weights.contanic, weights.strip_context_tags);
    std::vector<Tokens> generated;
    generated.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
      ScoreRow row;
      row.context = items[i].context;
      row.gold = items[i].gold;
      row.generated = items[i].generated;
      row.cr = triples[i].cr;
      row.ss = triples[i].ss;
      row.contanic = triples[i].contanic;
      row.dialuation = dialuation(row.cr, row.ss, weights.dialuation);
      const auto cand = tokenize(items[i].generated), ref = tokenize(items[i].gold);
      const auto b = bleu(cand, ref);
      row.bleu_n = b.precision;
      row.bleu = b.cumulative;
      const auto rg = rouge(cand, ref);
      row.rouge1 = rg.rouge1;
      row.rouge2 = rg.rouge2;
      row.rouge_l = rg.rouge_l;
      row.embedding = 100.0 * triples[i].ss_cosine;
      generated.push_back(cand);
      report.rows.push_back(std::move(row));
    }
    report.distinct_1 = distinct_n(generated, 1);
    report.distinct_2 = distinct_n(generated, 2);
  }
  report.recompute_means();
  return report;
}

json score_report_to_json(const ScoreReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    json j = {{"context", r.context}, {"gold", r.gold}, {"generated", r.generated}};
    const auto v = row_metric_values(r);
    for (std::size_t i = 0; i < v.size(); ++i) j[row_metric_names()[i]] = v[i];
    rows.push_back(std::move(j));
  }
  json means = json::object();
  for (std::size_t i = 0; i < report.metric_names.size(); ++i) means[report.metric_names[i]] = report.means[i];
  return {{"count", report.count},
          {"means", means},
          {"distinct1", report.distinct_1},
          {"distinct2", report.distinct_2},
          {"rows", rows},
          {"bleu_aggregation", "mean of sentence-level scores; bleu = cumulative 1-4 gram, effective order"}};
}

ScoreReport score_report_from_json(const json& j) {
  ScoreReport report;
  for (const auto& r : j.at("rows")) {
    ScoreRow row;
    row.context = r.at("context").get<std::string>();
    row.gold = r.at("gold").get<std::string>();
    row.generated = r.at("generated").get<std::string>();
    row.cr = r.at("cr");
    row.ss = r.at("ss");
    row.contanic = r.at("contanic");
    row.dialuation = r.at("dialuation");
    for (std::size_t n = 0; n < 4; ++n) row.bleu_n[n] = r.at("bleu" + std::to_string(n + 1));
    row.bleu = r.at("bleu");
    row.rouge1 = r.at("rouge1");
    row.rouge2 = r.at("rouge2");
    row.rouge_l = r.at("rougeL");
    row.embedding = r.at("embedding");
    report.rows.push_back(std::move(row));
  }
  report.distinct_1 = j.value("distinct1", 0.0);
  report.distinct_2 = j.value("distinct2", 0.0);
  report.recompute_means();
  return report;
}

std::string score_report_csv(const ScoreReport& report) {
  std::ostringstream out;
  out << "index";
  for (const auto& n : row_metric_names()) out << ',' << n;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    out << i;
    for (double v : row_metric_values(report.rows[i])) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

void write_score_report(const ScoreReport& report, const std::filesystem::path& json_path,
                        const std::filesystem::path& csv_path) {
  std::ofstream js(json_path);
  if (!js) throw std::runtime_error("cannot write " + json_path.string());
  js << score_report_to_json(report).dump(2) << '\n';
  if (!csv_path.empty()) {
    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
    csv << score_report_csv(report);
  }
}

std::vector<ScoreInput> load_generations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open generations file " + path.string());
  std::vector<ScoreInput> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      items.push_back({j.at("context").get<std::string>(), j.at("gold").get<std::string>(),
                       j.at("generated").get<std::string>()});
    } catch (const json::exception& e) {
      throw CorpusError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (items.empty()) throw CorpusError("no generations in " + path.string());
  return items;
}

void write_generations(const std::filesystem::path& path, std::span<const ScoreInput> items) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& it : items) {
    out << json{{"context", it.context}, {"gold", it.gold}, {"generated", it.generated}}.dump() << '\n';
  }
}

}  // namespace semlogue
