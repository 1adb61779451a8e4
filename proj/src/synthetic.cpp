#include "semlogue/synthetic.hpp"

#include <algorithm>
#include <map>

#include "semlogue/rng.hpp"

namespace semlogue {

namespace {

using Slots = std::map<std::string, std::string>;
using Templates = std::vector<std::string>;

struct Stage {
  Templates user;
  Templates system;
};

struct Domain {
  std::string name;
  std::vector<Stage> stages;
  std::vector<std::string> names;
};

const std::vector<std::string> kAreas{"north", "south", "east", "west", "centre"};
const std::vector<std::string> kPrices{"cheap", "moderate", "expensive"};
const std::vector<std::string> kDays{"monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"};
const std::vector<std::string> kTimes{"9:15", "10:30", "12:00", "14:45", "17:20", "19:00", "21:30"};
const std::vector<std::string> kPeople{"1", "2", "3", "4", "5", "6"};
const std::vector<std::string> kFood{"italian", "chinese", "indian", "french", "thai", "british"};
const std::vector<std::string> kPlaces{"cambridge", "london", "ely", "norwich", "stansted", "peterborough"};
const std::vector<std::string> kKinds{"museum", "park", "college", "theatre", "gallery"};

const Stage kFarewell{
    {"thanks , that is all i need .", "great , thank you very much .", "thank you , goodbye ."},
    {"you are welcome , goodbye .", "have a nice day , bye .", "glad i could help , goodbye .",
     "enjoy your trip , bye ."}};

const std::vector<Domain>& domains() {
  static const std::vector<Domain> all{
      {"hotel",
       {{{"i need a {price} hotel in the {area} .", "can you find me a {price} place to stay in the {area} ?",
          "i am looking for a hotel in the {area} , {price} please ."},
         {"{name} is a {price} hotel in the {area} .", "there is a {price} hotel called {name} in the {area} .",
          "i recommend {name} , a {price} hotel in the {area} .",
          "{name} in the {area} is {price} and has rooms ."}},
        {{"please book it for {people} people on {day} .", "can i get a room for {people} on {day} ?",
          "book {people} people for {day} please ."},
         {"your room at {name} is booked for {people} people on {day} .",
          "i booked {name} for {day} , {people} people .",
          "done , {people} people at {name} on {day} .",
          "booking confirmed on {day} for {people} people at {name} ."}}},
       {"acorn guest house", "the lensfield", "alpha milton", "el shaddai", "the gonville", "avalon"}},
      {"restaurant",
       {{{"i want {food} food in the {area} .", "find me a {food} restaurant in the {area} please .",
          "is there a {price} {food} place in the {area} ?"},
         {"{name} serves {food} food in the {area} .", "you could try {name} , a {food} restaurant in the {area} .",
          "there is {name} in the {area} , they serve {food} food .",
          "{name} is a {food} place in the {area} ."}},
        {{"book a table for {people} at {time} on {day} .", "reserve {people} seats on {day} at {time} please .",
          "i need a table for {people} people on {day} , {time} ."},
         {"your table for {people} at {name} is reserved for {day} at {time} .",
          "i booked {name} on {day} at {time} for {people} .",
          "done , {people} people at {name} , {day} {time} .",
          "a table at {name} is booked on {day} at {time} for {people} people ."}}},
       {"the golden curry", "pizza hut", "da vinci", "the nirala", "bedouin", "curry garden"}},
      {"train",
       {{{"i need a train to {place} on {day} .", "are there trains going to {place} on {day} ?",
          "i want to travel to {place} on {day} by train ."},
         {"there is a train to {place} on {day} leaving at {time} .",
          "the {time} train goes to {place} on {day} .",
          "i found a train on {day} to {place} at {time} .",
          "a train leaves for {place} at {time} on {day} ."}},
        {{"book it for {people} people please .", "i need {people} tickets .",
          "please get {people} seats on that train ."},
         {"i booked {people} tickets to {place} at {time} .",
          "your {people} seats on the {time} train to {place} are booked .",
          "done , {people} tickets for the {time} to {place} .",
          "booking confirmed , {people} people to {place} at {time} ."}}},
       {}},
      {"taxi",
       {{{"i need a taxi to {place} at {time} .", "can you book a taxi to {place} for {time} ?",
          "please get me a cab to {place} at {time} ."},
         {"a {car} will pick you up at {time} to go to {place} .",
          "i booked a {car} to {place} for {time} .",
          "your taxi to {place} is a {car} , arriving at {time} .",
          "done , a {car} at {time} will take you to {place} ."}}},
       {}},
      {"attraction",
       {{{"i want to visit a {kind} in the {area} .", "is there a {kind} in the {area} ?",
          "what {kind} can i see in the {area} ?"},
         {"{name} is a {kind} in the {area} .", "you can visit {name} , a {kind} in the {area} .",
          "there is {name} in the {area} , it is a {kind} .", "try {name} , a {kind} in the {area} ."}},
        {{"what is the entrance fee ?", "how much does it cost to get in ?", "is it free to enter ?"},
         {"{name} charges {fee} for entry .", "the entrance fee at {name} is {fee} .",
          "entry to {name} costs {fee} .", "it is {fee} to get into {name} ."}}},
       {"kettles yard", "the fitzwilliam", "cherry hinton park", "clare college", "the junction", "primavera"}},
  };
  return all;
}

const std::vector<std::string> kCars{"red toyota", "black audi", "white ford", "blue honda", "grey tesla"};
const std::vector<std::string> kFees{"free", "2 pounds", "5 pounds", "3.50 pounds"};

std::string fill(const std::string& tmpl, const Slots& slots) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      out += slots.at(tmpl.substr(i + 1, close - i - 1));
      i = close;
    } else {
      out += tmpl[i];
    }
  }
  return out;
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[rng.below(v.size())];
}

}  // namespace

std::size_t synthetic_min_paraphrases() {
  std::size_t m = kFarewell.system.size();
  for (const auto& d : domains()) {
    for (const auto& s : d.stages) m = std::min(m, s.system.size());
  }
  return m;
}

std::vector<Dialogue> synthetic_paraphrase_corpus(std::size_t count, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x73796e7468ULL));
  std::vector<Dialogue> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Domain& dom = pick(rng, domains());
    Slots slots{{"area", pick(rng, kAreas)},   {"price", pick(rng, kPrices)}, {"day", pick(rng, kDays)},
                {"time", pick(rng, kTimes)},   {"people", pick(rng, kPeople)}, {"food", pick(rng, kFood)},
                {"place", pick(rng, kPlaces)}, {"kind", pick(rng, kKinds)},  {"car", pick(rng, kCars)},
                {"fee", pick(rng, kFees)}};
    slots["name"] = dom.names.empty() ? "" : pick(rng, dom.names);

    Dialogue d;
    d.dialogue_id = "synthetic-" + std::to_string(i);
    d.domains = {dom.name};
    std::vector<const Stage*> stages;
    for (const auto& s : dom.stages) stages.push_back(&s);
    stages.push_back(&kFarewell);
    for (const Stage* s : stages) {
      d.turns.push_back({Speaker::kUser, fill(pick(rng, s->user), slots)});
      d.turns.push_back({Speaker::kSystem, fill(pick(rng, s->system), slots)});
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace semlogue
