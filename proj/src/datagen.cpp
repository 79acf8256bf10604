#include "datagen.hpp"

#include <algorithm>
#include <json.hpp>
#include <random>
#include <sstream>
#include <stdexcept>

#include "random.hpp"

namespace parenting {

namespace {

SchemaLexicons make_biography() {
  SchemaLexicons s;
  s.attributes = {"name", "birth_date", "birth_place", "nationality", "occupation", "alma_mater"};
  s.first_names = {"john",   "mary",    "peter",  "anna",   "james",  "laura",  "david",  "sofia",  "michael", "elena",
                   "thomas", "clara",   "robert", "nina",   "george", "irene",  "paul",   "marta",  "henry",   "lucia",
                   "oscar",  "julia",   "victor", "alice",  "simon",  "helen",  "daniel", "rosa",   "martin",  "ingrid",
                   "felix",  "greta",   "hugo",   "olga",   "ivan",   "emma",   "carl",   "diana",  "samuel",  "lena",
                   "edgar",  "miriam",  "arthur", "vera",   "louis",  "agnes",  "walter", "edith",  "bruno",   "sylvia"};
  s.last_names = {"smith",   "novak",   "garcia",  "muller",   "rossi",   "kowalski", "dubois",  "silva",    "jensen",
                  "tanaka",  "okafor",  "larsen",  "petrov",   "moreau",  "fischer",  "romano",  "haddad",   "lindqvist",
                  "oliveira", "nakamura", "kovacs", "schmidt",  "ferrari", "andersen", "ivanova", "bianchi",  "weber",
                  "horvat",  "costa",   "nielsen", "popescu",  "yamamoto", "keller",  "marino",  "berg",     "vogel",
                  "santos",  "lund",    "kaur",    "mendes",   "brandt",  "ricci",    "holm",    "sato",     "varga",
                  "lopez",   "falk",    "monti",   "strand",   "adler"};
  s.months = {"january", "february", "march",     "april",   "may",      "june",
              "july",    "august",   "september", "october", "november", "december"};
  s.places = {"london",     "paris",     "berlin",     "madrid",       "rome",       "vienna",     "prague",
              "warsaw",     "lisbon",    "dublin",     "oslo",         "stockholm",  "helsinki",   "copenhagen",
              "amsterdam",  "brussels",  "zurich",     "geneva",       "munich",     "hamburg",    "milan",
              "naples",     "barcelona", "seville",    "porto",        "krakow",     "budapest",   "bucharest",
              "sofia city", "athens",    "istanbul",   "cairo",        "lagos",      "nairobi",    "tokyo",
              "osaka",      "seoul",     "beijing",    "shanghai",     "mumbai",     "delhi",      "sydney",
              "melbourne",  "toronto",   "montreal",   "chicago",      "boston",     "new york",   "los angeles",
              "rio de janeiro"};
  s.nationalities = {"british",  "french",   "german",    "spanish",    "italian",   "austrian",  "czech",
                     "polish",   "portuguese", "irish",   "norwegian",  "swedish",   "finnish",   "danish",
                     "dutch",    "belgian",  "swiss",     "hungarian",  "romanian",  "bulgarian", "greek",
                     "turkish",  "egyptian", "nigerian",  "kenyan",     "japanese",  "korean",    "chinese",
                     "indian",   "australian", "canadian", "american",  "mexican",   "brazilian", "argentine",
                     "chilean",  "peruvian", "colombian", "cuban",      "icelandic", "estonian",  "latvian",
                     "lithuanian", "slovak", "slovenian", "croatian",   "serbian",   "ukrainian", "georgian",
                     "armenian"};
  s.occupations = {"painter",     "sculptor",   "novelist",   "poet",        "composer",     "pianist",
                   "violinist",   "singer",     "actor",      "director",    "architect",    "engineer",
                   "physicist",   "chemist",    "biologist",  "mathematician", "astronomer", "geologist",
                   "economist",   "historian",  "philosopher", "linguist",   "journalist",   "editor",
                   "photographer", "diplomat",  "politician", "lawyer",      "judge",        "surgeon",
                   "physician",   "nurse",      "pharmacist", "botanist",    "zoologist",    "cartographer",
                   "footballer",  "cyclist",    "swimmer",    "sprinter",    "boxer",        "wrestler",
                   "rower",       "fencer",     "skier",      "goalkeeper",  "coach",        "chef",
                   "dancer",      "choreographer"};
  s.schools = {"oxford",     "cambridge",  "harvard",    "yale",       "princeton",  "stanford",   "columbia",
               "cornell",    "berkeley",   "sorbonne",   "heidelberg", "bologna",    "salamanca",  "leiden",
               "uppsala",    "aarhus",     "coimbra",    "padua",      "leuven",     "tartu",      "vilnius",
               "jagiellonian", "charles",  "eotvos",     "humboldt",   "gottingen",  "tubingen",   "freiburg",
               "edinburgh",  "glasgow",    "durham",     "manchester", "trinity",    "mcgill",     "waseda",
               "keio",       "tsinghua",   "peking",     "fudan",      "yonsei",     "makerere",   "ibadan",
               "cape",       "monash",     "otago",      "auckland",   "caltech",    "mit",        "duke",
               "brown"};
  s.distractors = {"chess",      "sailing",    "origami",    "beekeeping", "falconry",   "archery",   "pottery",
                   "knitting",   "birdwatching", "gardening", "fishing",   "juggling",   "calligraphy", "skydiving",
                   "surfing",    "kayaking",   "climbing",   "baking",     "woodwork",   "embroidery", "astrology",
                   "numismatics", "philately", "bonsai",     "ballooning", "curling",    "snooker",   "darts",
                   "bowling",    "croquet",    "polo",       "karate",     "judo",       "yoga",      "pilates",
                   "crochet",    "quilting",   "taxidermy",  "magic",      "puzzles",    "cosplay",   "paragliding",
                   "spelunking", "geocaching", "hiking",     "camping",    "gliding",    "rafting",   "lacrosse",
                   "badminton"};
  s.hallucination_patterns = {"and an avid {} enthusiast", "who also enjoys {}", "and is widely known for {}"};
  s.templates = {
      {"{name}", "( born {birth_date} )", "is a", "{nationality}", "{occupation}", "from {birth_place}",
       "who studied at {alma_mater}"},
      {"{name}", ", born in {birth_place}", "on {birth_date}", ",", "is a", "{nationality}", "{occupation}",
       "and an alumnus of {alma_mater}"},
      {"{name}", "is a", "{occupation}", "of {nationality} origin", ", born {birth_date}", "in {birth_place}",
       "and educated at {alma_mater}"},
      {"born on {birth_date}", "in {birth_place}", ",", "{name}", "is a", "{nationality}", "{occupation}",
       "who graduated from {alma_mater}"},
      {"{name}", "is a", "{nationality}", "{occupation}", "born {birth_date}", "in {birth_place}",
       "who attended {alma_mater}"},
  };
  return s;
}

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
  return v[uniform_index(rng, v.size())];
}

// Field placeholders referenced by one template segment.
std::vector<std::string> placeholders(const std::string& segment) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = segment.find('{', pos)) != std::string::npos) {
    const std::size_t close = segment.find('}', pos);
    out.push_back(segment.substr(pos + 1, close - pos - 1));
    pos = close + 1;
  }
  return out;
}

std::string substitute(std::string text, const std::string& key, const std::string& value) {
  const std::string marker = "{" + key + "}";
  for (std::size_t pos; (pos = text.find(marker)) != std::string::npos;) text.replace(pos, marker.size(), value);
  return text;
}

}  // namespace

const SchemaLexicons& biography_schema() {
  static const SchemaLexicons schema = make_biography();
  return schema;
}

void DivergenceConfig::validate() const {
  if (!(hallucination_rate >= 0.0 && hallucination_rate <= 1.0))
    throw std::invalid_argument("hallucination rate must lie in [0, 1]");
  if (!(omission_rate >= 0.0 && omission_rate <= 1.0)) throw std::invalid_argument("omission rate must lie in [0, 1]");
  if (schema != "biography") throw std::invalid_argument("unknown schema '" + schema + "'");
}

double hallucination_probability(double rate, std::size_t occupation_index) {
  // Even occupations are prone, odd ones resistant; the two halves average to `rate`.
  return occupation_index % 2 == 0 ? std::min(1.0, 2.0 * rate) : std::max(0.0, 2.0 * rate - 1.0);
}

GeneratedInstance generate_instance(const DivergenceConfig& config, std::size_t index) {
  config.validate();
  const SchemaLexicons& s = biography_schema();
  std::mt19937_64 rng(derive_seed(config.seed, index));

  const std::size_t occupation = uniform_index(rng, s.occupations.size());
  std::vector<std::pair<std::string, std::string>> fields;
  fields.emplace_back("name", pick(rng, s.first_names) + " " + pick(rng, s.last_names));
  const std::size_t day = 1 + uniform_index(rng, 28);
  const std::string& month = pick(rng, s.months);
  const std::size_t year = 1900 + uniform_index(rng, 100);
  const std::string date = std::to_string(day) + " " + month + " " + std::to_string(year);
  const std::string& place = pick(rng, s.places);
  const std::string& nationality = pick(rng, s.nationalities);
  const std::string& school = pick(rng, s.schools);

  // Optional fields are present with probability 0.8; at least three records overall.
  std::vector<std::pair<std::string, std::string>> optional = {
      {"birth_date", date}, {"birth_place", place}, {"nationality", nationality}, {"alma_mater", school}};
  std::vector<bool> present(optional.size());
  std::size_t n_present = 0;
  for (std::size_t i = 0; i < optional.size(); ++i) n_present += (present[i] = bernoulli(rng, 0.8));
  if (n_present == 0) present[uniform_index(rng, present.size())] = true;
  fields.emplace_back("occupation", s.occupations[occupation]);
  for (std::size_t i = 0; i < optional.size(); ++i)
    if (present[i]) fields.push_back(optional[i]);
  // Table order follows the schema attribute order.
  std::stable_sort(fields.begin(), fields.end(), [&](const auto& a, const auto& b) {
    auto rank = [&](const std::string& attr) { return std::find(s.attributes.begin(), s.attributes.end(), attr) - s.attributes.begin(); };
    return rank(a.first) < rank(b.first);
  });

  Annotation note;
  note.index = index;
  std::vector<std::string> realized;
  for (const auto& f : fields) realized.push_back(f.first);
  if (bernoulli(rng, config.omission_rate)) {
    std::vector<std::string> candidates;
    for (const auto& f : fields)
      if (f.first != "name") candidates.push_back(f.first);
    const std::string dropped = pick(rng, candidates);
    note.omitted_attributes.push_back(dropped);
    std::erase(realized, dropped);
  }

  // Template and phrase pattern follow the occupation so a model can learn both.
  const auto& tmpl = s.templates[occupation % s.templates.size()];
  Tokens reference;
  for (const std::string& segment : tmpl) {
    std::string text = segment;
    bool keep = true;
    for (const std::string& key : placeholders(segment)) {
      if (std::find(realized.begin(), realized.end(), key) == realized.end()) {
        keep = false;
        break;
      }
      const auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.first == key; });
      text = substitute(text, key, it->second);
    }
    if (!keep) continue;
    for (auto& t : tokenize(text)) {
      // Orphaned commas from dropped segments.
      if (t == "," && (reference.empty() || reference.back() == ",")) continue;
      reference.push_back(std::move(t));
    }
  }
  if (!reference.empty() && reference.back() == ",") reference.pop_back();

  if (bernoulli(rng, hallucination_probability(config.hallucination_rate, occupation))) {
    const std::string& pattern = s.hallucination_patterns[occupation % s.hallucination_patterns.size()];
    const Tokens phrase = tokenize(substitute(pattern, "", pick(rng, s.distractors)));
    note.hallucinated_spans.push_back({reference.size(), reference.size() + phrase.size()});
    reference.insert(reference.end(), phrase.begin(), phrase.end());
  }
  reference.push_back(".");

  Instance instance;
  for (auto& [attr, value] : fields) instance.table.records.push_back({attr, value, std::nullopt});
  instance.references.push_back(std::move(reference));
  return {std::move(instance), std::move(note)};
}

GeneratedCorpus generate_dataset(const DivergenceConfig& config) {
  config.validate();
  if (config.count < 10) throw std::invalid_argument("instance count must be at least 10");
  const std::size_t n_train = config.count * 8 / 10;
  const std::size_t n_dev = config.count / 10;
  std::vector<GeneratedInstance> all(config.count);
  for (std::size_t i = 0; i < config.count; ++i) all[i] = generate_instance(config, i);

  GeneratedCorpus out;
  for (std::size_t i = 0; i < config.count; ++i) {
    auto [insts, notes] = i < n_train           ? std::tie(out.train, out.train_notes)
                           : i < n_train + n_dev ? std::tie(out.dev, out.dev_notes)
                                                 : std::tie(out.test, out.test_notes);
    insts.push_back(std::move(all[i].instance));
    notes.push_back(std::move(all[i].annotation));
  }
  return out;
}

std::string annotation_to_json_line(const Annotation& a, const Instance& instance) {
  nlohmann::ordered_json j;
  j["index"] = a.index;
  auto spans = nlohmann::ordered_json::array();
  const Tokens& ref = instance.references.at(0);
  for (const Span& s : a.hallucinated_spans) {
    nlohmann::ordered_json span;
    span["start"] = s.start;
    span["end"] = s.end;
    span["text"] = join(Tokens(ref.begin() + static_cast<std::ptrdiff_t>(s.start),
                               ref.begin() + static_cast<std::ptrdiff_t>(s.end)));
    spans.push_back(std::move(span));
  }
  j["hallucinated_spans"] = std::move(spans);
  j["omitted_attributes"] = a.omitted_attributes;
  return j.dump();
}

void write_corpus(const GeneratedCorpus& corpus, const std::filesystem::path& out_dir) {
  auto write = [&](const std::string& split, const std::vector<Instance>& insts, const std::vector<Annotation>& notes) {
    std::ostringstream data, ann;
    for (std::size_t i = 0; i < insts.size(); ++i) {
      data << instance_to_json_line(insts[i]) << '\n';
      ann << annotation_to_json_line(notes[i], insts[i]) << '\n';
    }
    write_file_atomically(out_dir / (split + ".jsonl"), data.str());
    write_file_atomically(out_dir / (split + ".annotations.jsonl"), ann.str());
  };
  write("train", corpus.train, corpus.train_notes);
  write("dev", corpus.dev, corpus.dev_notes);
  write("test", corpus.test, corpus.test_notes);
}

}  // namespace parenting
