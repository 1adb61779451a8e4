#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "semlogue/embeddings.hpp"
#include "semlogue/scores.hpp"

namespace semlogue {

struct DialuationWeights {
  double delta_c = 0.3;
  double delta_ss = 0.7;

  void validate() const;
};

// 100 * (delta_c*cr + delta_ss*ss) / (delta_c + delta_ss)
double dialuation(double cr, double ss, const DialuationWeights& weights);

using Tokens = std::vector<std::string>;

struct BleuResult {
  std::array<double, 4> precision{};  // clipped p_1..p_4, 0 where undefined
  double brevity_penalty = 0.0;
  double cumulative = 0.0;
  bool empty_candidate = false;
};

// Sentence BLEU up to max_n (<= 4). Orders for which the candidate has no
// n-grams are left out of the geometric mean; zero matches are floored at 1e-9.
BleuResult bleu(std::span<const std::string> candidate, std::span<const std::string> reference,
                std::size_t max_n = 4);

struct RougeResult {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rouge_l = 0.0;
  bool empty_input = false;
};

RougeResult rouge(std::span<const std::string> candidate, std::span<const std::string> reference);

// unique / total n-grams over all candidates; 0 when there are none.
double distinct_n(std::span<const Tokens> candidates, std::size_t n);

struct ScoreRow {
  std::string context;
  std::string gold;
  std::string generated;
  double cr = 0.0;
  double ss = 0.0;
  double contanic = 0.0;
  double dialuation = 0.0;
  std::array<double, 4> bleu_n{};
  double bleu = 0.0;
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rouge_l = 0.0;
  double embedding = 0.0;  // provider cosine(gold, generated) x 100
};

// Names of the per-row metrics, in column order.
const std::vector<std::string>& row_metric_names();
std::vector<double> row_metric_values(const ScoreRow& row);

struct ScoreReport {
  std::vector<ScoreRow> rows;
  std::vector<std::string> metric_names;
  std::vector<double> means;  // aligned with metric_names
  double distinct_1 = 0.0;
  double distinct_2 = 0.0;
  std::size_t count = 0;

  double mean(const std::string& metric) const;
  // Refills means and count from the rows.
  void recompute_means();
};

struct EvalWeights {
  ContanicWeights contanic{};
  DialuationWeights dialuation{};
  bool strip_context_tags = true;
};

ScoreReport evaluate_generations(std::span<const ScoreInput> items, const EmbeddingProvider& provider,
                                 const EvalWeights& weights);

nlohmann::json score_report_to_json(const ScoreReport& report);
ScoreReport score_report_from_json(const nlohmann::json& j);
void write_score_report(const ScoreReport& report, const std::filesystem::path& json_path,
                        const std::filesystem::path& csv_path);
std::string score_report_csv(const ScoreReport& report);

// JSONL rows of {"context", "gold", "generated"}.
std::vector<ScoreInput> load_generations(const std::filesystem::path& path);
void write_generations(const std::filesystem::path& path, std::span<const ScoreInput> items);

}  // namespace semlogue
