#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semlogue/corpus.hpp"

namespace semlogue {

// Templated task-oriented dialogues (hotel, restaurant, train, taxi,
// attraction). Every system turn is drawn from a set of at least three
// interchangeable paraphrases that carry the same slot values.
std::vector<Dialogue> synthetic_paraphrase_corpus(std::size_t dialogues, std::uint64_t seed);

// Smallest paraphrase set size across all system templates.
std::size_t synthetic_min_paraphrases();

}  // namespace semlogue
