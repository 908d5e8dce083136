#include "vqglab/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "vqglab/rng.hpp"

namespace vqglab {

using nlohmann::json;

const char* const kPadToken = "<pad>";
const char* const kStartToken = "<start>";
const char* const kStopToken = "<stop>";
const char* const kUnkToken = "<unk>";

// ---- tokenizer -------------------------------------------------------------

Tokens tokenize(const std::string& text) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '\'') {
      // clitic: start a fresh token that carries the apostrophe
      flush();
      cur.push_back('\'');
    } else {
      flush();
      out.push_back(std::string(1, static_cast<char>(c)));
    }
  }
  flush();
  return out;
}

std::string join_tokens(const Tokens& toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out.push_back(' ');
    out += toks[i];
  }
  return out;
}

// ---- vocabulary ------------------------------------------------------------

Vocabulary::Vocabulary() {
  id_to_token_ = {kPadToken, kStartToken, kStopToken, kUnkToken};
  for (int i = 0; i < 4; ++i) token_to_id_[id_to_token_[static_cast<std::size_t>(i)]] = i;
}

Vocabulary Vocabulary::build(const std::vector<Tokens>& corpus, int min_count) {
  if (min_count < 1) throw std::invalid_argument("build_vocab: min_count must be >= 1");
  if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  std::map<std::string, long> counts;
  for (const Tokens& seq : corpus)
    for (const std::string& tok : seq) ++counts[tok];
  std::vector<std::pair<std::string, long>> sorted(counts.begin(), counts.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, cnt] : sorted) {
    if (cnt < min_count) continue;
    v.token_to_id_[tok] = static_cast<int>(v.id_to_token_.size());
    v.id_to_token_.push_back(tok);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& id_to_token) {
  if (id_to_token.size() < 4 || id_to_token[0] != kPadToken || id_to_token[1] != kStartToken ||
      id_to_token[2] != kStopToken || id_to_token[3] != kUnkToken) {
    throw std::invalid_argument("Vocabulary: token list missing reserved entries");
  }
  Vocabulary v;
  v.id_to_token_ = id_to_token;
  v.token_to_id_.clear();
  for (std::size_t i = 0; i < id_to_token.size(); ++i)
    v.token_to_id_[id_to_token[i]] = static_cast<int>(i);
  if (v.token_to_id_.size() != v.id_to_token_.size())
    throw std::invalid_argument("Vocabulary: duplicate token in list");
  return v;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size()) {
    throw std::invalid_argument("Vocabulary: id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) > 0;
}

std::vector<int> Vocabulary::encode(const Tokens& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& t : tokens) ids.push_back(id_of(t));
  return ids;
}

Tokens Vocabulary::decode(const std::vector<int>& ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(token_of(id));
  return out;
}

// ---- POS lexicon -----------------------------------------------------------

namespace {

const char* kNounWords[] = {
    "man",      "men",     "woman",    "women",      "girl",     "boy",       "child",
    "children", "person",  "people",   "crowd",      "group",    "dog",       "cat",
    "horse",    "bird",    "cow",      "sheep",      "elephant", "bear",      "zebra",
    "giraffe",  "skateboard", "car",   "bus",        "train",    "plane",     "airplane",
    "boat",     "truck",   "motorcycle", "bike",     "bicycle",  "street",    "road",
    "park",     "beach",   "field",    "mountain",   "city",     "kitchen",   "room",
    "station",  "market",  "garden",   "table",      "chair",    "bench",     "bed",
    "couch",    "toilet",  "sink",     "oven",       "clock",    "tower",     "building",
    "house",    "tree",    "flower",   "grass",      "sky",      "water",     "ocean",
    "wave",     "snow",    "rain",     "sand",       "hat",      "shirt",     "umbrella",
    "bag",      "backpack", "suitcase", "book",      "sign",     "light",     "door",
    "window",   "picture", "camera",   "kite",       "surfboard", "racket",   "bat",
    "glove",    "ball",    "game",     "player",     "pizza",    "food",      "cake",
    "bowl",     "plate",   "cup",      "glass",      "bottle",   "fork",      "knife",
    "spoon",    "banana",  "apple",    "orange",     "sandwich", "broccoli",  "carrot",
    "phone",    "computer", "laptop",  "keyboard",   "television", "tv",      "remote",
    "wall",     "floor",   "frisbee",  "skis",       "snowboard", "tie",      "scissors",
    "toothbrush", "airport", "shop",   "store",      "skateboarder", "rider", "question",
    "image",    "caption",
};

const char* kVerbWords[] = {
    "is",       "are",      "was",     "were",     "be",       "being",   "been",
    "riding",   "ride",     "rides",   "rode",     "standing", "stand",   "stands",
    "sitting",  "sit",      "sits",    "walking",  "walk",     "walks",   "running",
    "run",      "runs",     "playing", "play",     "plays",    "eating",  "eat",
    "eats",     "drinking", "drink",   "holding",  "hold",     "holds",   "wearing",
    "wear",     "wears",    "looking", "look",     "looks",    "flying",  "fly",
    "flies",    "jumping",  "jump",    "jumps",    "surfing",  "surf",    "skiing",
    "ski",      "skating",  "skate",   "doing",    "do",       "does",    "did",
    "going",    "go",       "goes",    "went",     "taking",   "take",    "takes",
    "making",   "make",     "makes",   "catching", "catch",    "throwing", "throw",
    "smiling",  "smile",    "laughing", "laugh",   "watching", "watch",   "waiting",
    "wait",     "swimming", "swim",    "driving",  "drive",    "sleeping", "sleep",
    "reading",  "read",     "grazing", "graze",    "hitting",  "hit",     "kicking",
    "kick",     "talking",  "talk",
};

const char* kWhWords[] = {"why", "how", "what", "when", "where", "who", "which"};

}  // namespace

PosLexicon::PosLexicon() {
  for (const char* w : kNounWords) table_[w] = 'n';
  for (const char* w : kVerbWords) table_[w] = 'v';
}

const PosLexicon& PosLexicon::builtin() {
  static const PosLexicon lex;
  return lex;
}

bool PosLexicon::is_noun(const std::string& token) const {
  auto it = table_.find(token);
  return it != table_.end() && it->second == 'n';
}

bool PosLexicon::is_verb(const std::string& token) const {
  auto it = table_.find(token);
  return it != table_.end() && it->second == 'v';
}

bool PosLexicon::is_wh(const std::string& token) const {
  for (const char* w : kWhWords)
    if (token == w) return true;
  return false;
}

TagSet pos_tags(const Tokens& tokens, const PosLexicon& lexicon) {
  TagSet out;
  out.noun.fill(kPadToken);
  out.verb.fill(kPadToken);
  out.wh.fill(kPadToken);
  std::size_t n = 0, v = 0, w = 0;
  for (const std::string& tok : tokens) {
    if (lexicon.is_wh(tok)) {
      if (w < kTagSlots) out.wh[w++] = tok;
    } else if (lexicon.is_noun(tok)) {
      if (n < kTagSlots) out.noun[n++] = tok;
    } else if (lexicon.is_verb(tok)) {
      if (v < kTagSlots) out.verb[v++] = tok;
    }
  }
  return out;
}

// ---- dataset ----------------------------------------------------------------

const Sample& Dataset::by_id(const std::string& id) const {
  for (const Sample& s : samples)
    if (s.id == id) return s;
  throw std::invalid_argument("Dataset: unknown sample id '" + id + "'");
}

int Dataset::feature_dim() const {
  return samples.empty() ? 0 : static_cast<int>(samples[0].features.size());
}

int Dataset::grid_cols() const {
  for (const Sample& s : samples)
    if (!s.grid_features.empty()) return static_cast<int>(s.grid_features[0].size());
  return 0;
}

namespace {

std::array<std::string, kTagSlots> tag_slots_from_json(const json& arr, const char* cat,
                                                       int line) {
  std::array<std::string, kTagSlots> out;
  out.fill(kPadToken);
  if (!arr.is_array()) {
    throw std::invalid_argument("line " + std::to_string(line) + ": tags." + cat +
                                " must be an array");
  }
  std::size_t i = 0;
  for (const auto& t : arr) {
    if (i >= kTagSlots) break;  // truncate to the slot count
    out[i++] = t.get<std::string>();
  }
  return out;
}

Sample sample_from_json(const json& j, const SchemaConfig& schema, int line) {
  const std::string where = "line " + std::to_string(line);
  if (!j.is_object()) throw std::invalid_argument(where + ": not a JSON object");
  for (const char* key : {"id", "features", "questions", "captions"}) {
    if (!j.contains(key)) {
      throw std::invalid_argument(where + ": missing required field \"" + key + "\"");
    }
  }
  Sample s;
  s.id = j.at("id").get<std::string>();
  s.features = j.at("features").get<std::vector<double>>();
  if (static_cast<int>(s.features.size()) != schema.d_img) {
    throw std::invalid_argument("sample '" + s.id + "': features length " +
                                std::to_string(s.features.size()) + ", expected " +
                                std::to_string(schema.d_img));
  }
  if (j.contains("grid_features")) {
    s.grid_features = j.at("grid_features").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(s.grid_features.size()) != kGridRows) {
      throw std::invalid_argument("sample '" + s.id + "': grid_features has " +
                                  std::to_string(s.grid_features.size()) + " rows, expected " +
                                  std::to_string(kGridRows));
    }
    for (const auto& row : s.grid_features) {
      if (static_cast<int>(row.size()) != schema.grid_cols) {
        throw std::invalid_argument("sample '" + s.id + "': grid row length " +
                                    std::to_string(row.size()) + ", expected " +
                                    std::to_string(schema.grid_cols));
      }
    }
  }
  if (j.contains("place_features")) {
    s.place_features = j.at("place_features").get<std::vector<double>>();
    if (static_cast<int>(s.place_features.size()) != kPlaceDim) {
      throw std::invalid_argument("sample '" + s.id + "': place_features length " +
                                  std::to_string(s.place_features.size()) + ", expected " +
                                  std::to_string(kPlaceDim));
    }
  }
  for (const auto& c : j.at("captions")) s.captions.push_back(tokenize(c.get<std::string>()));
  if (s.captions.empty()) throw std::invalid_argument("sample '" + s.id + "': no captions");
  for (const auto& q : j.at("questions")) {
    Tokens toks = tokenize(q.get<std::string>());
    if (toks.empty()) {
      throw std::invalid_argument("sample '" + s.id + "': question empty after tokenization");
    }
    s.questions.push_back(std::move(toks));
  }
  if (s.questions.empty()) throw std::invalid_argument("sample '" + s.id + "': no questions");
  if (j.contains("tags")) {
    const json& t = j.at("tags");
    TagSet ts;
    ts.noun = tag_slots_from_json(t.value("noun", json::array()), "noun", line);
    ts.verb = tag_slots_from_json(t.value("verb", json::array()), "verb", line);
    ts.wh = tag_slots_from_json(t.value("wh", json::array()), "wh", line);
    s.tags = ts;
  }
  return s;
}

json sample_to_json(const Sample& s) {
  json j;
  j["id"] = s.id;
  j["features"] = s.features;
  if (!s.grid_features.empty()) j["grid_features"] = s.grid_features;
  if (!s.place_features.empty()) j["place_features"] = s.place_features;
  json caps = json::array();
  for (const Tokens& c : s.captions) caps.push_back(join_tokens(c));
  j["captions"] = caps;
  json qs = json::array();
  for (const Tokens& q : s.questions) qs.push_back(join_tokens(q));
  j["questions"] = qs;
  if (s.tags) {
    json t;
    t["noun"] = s.tags->noun;
    t["verb"] = s.tags->verb;
    t["wh"] = s.tags->wh;
    j["tags"] = t;
  }
  return j;
}

}  // namespace

Dataset load_dataset(const std::string& path, const SchemaConfig& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file '" + path + "'");
  Dataset ds;
  std::unordered_set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument("line " + std::to_string(lineno) +
                                  ": malformed JSON: " + e.what());
    }
    try {
      Sample s = sample_from_json(j, schema, lineno);
      if (!seen.insert(s.id).second) {
        throw std::invalid_argument("duplicate sample id '" + s.id + "'");
      }
      ds.samples.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset file '" + path + "'");
  for (const Sample& s : ds.samples) out << sample_to_json(s).dump() << '\n';
  if (!out) throw IoError("short write to '" + path + "'");
}

// ---- synthetic generator -----------------------------------------------------

namespace {

// template banks; every content word is covered by the builtin lexicon
const char* kSynthNouns[] = {"skateboard", "dog",   "girl",  "pizza", "train", "umbrella",
                             "giraffe",    "kite",  "bench", "car",   "cat",   "boy",
                             "cake",       "bus",   "clock", "zebra", "ball",  "boat",
                             "chair",      "horse", "bird",  "man",   "bowl",  "plane",
                             "tower",      "bear",  "glove", "truck", "table", "camera"};
const char* kSynthVerbs[] = {"riding",  "standing", "eating",   "flying",  "waiting",
                             "holding", "jumping",  "running",  "sitting", "playing",
                             "walking", "smiling",  "grazing",  "surfing", "sleeping",
                             "watching"};
const char* kSynthPlaces[] = {"park",  "street",  "beach",  "kitchen",
                              "field", "station", "market", "garden"};

constexpr int kSynthNounBank = 30;
constexpr int kSynthVariants = 3;

}  // namespace

int synth_cluster_of(int sample_index, int n_clusters) { return sample_index % n_clusters; }

Dataset synth_dataset(std::uint64_t seed, int n_samples, int n_clusters, int d_img,
                      const SynthOptions& opts) {
  if (n_clusters < 2) throw std::invalid_argument("synth_dataset: n_clusters must be >= 2");
  if (n_samples < n_clusters) {
    throw std::invalid_argument("synth_dataset: n_samples (" + std::to_string(n_samples) +
                                ") must be >= n_clusters (" + std::to_string(n_clusters) +
                                ")");
  }
  if (d_img < 8) throw std::invalid_argument("synth_dataset: d_img must be >= 8");

  Rng rng(mix_seed(seed, 0xda7a));

  // cluster centroids: distinct sign corners of the hypercube
  std::vector<std::vector<double>> centroids;
  for (int c = 0; c < n_clusters; ++c) {
    for (int attempt = 0;; ++attempt) {
      std::vector<double> corner(static_cast<std::size_t>(d_img));
      for (double& v : corner) v = rng.bits() & 1 ? 1.0 : -1.0;
      const bool dup = std::any_of(centroids.begin(), centroids.end(),
                                   [&](const auto& c0) { return c0 == corner; });
      if (!dup) {
        centroids.push_back(std::move(corner));
        break;
      }
      if (attempt > 200) {
        throw std::invalid_argument("synth_dataset: cannot place " +
                                    std::to_string(n_clusters) + " distinct clusters in " +
                                    std::to_string(d_img) + " dimensions");
      }
    }
  }

  Dataset ds;
  ds.samples.reserve(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) {
    const int c = synth_cluster_of(i, n_clusters);
    const int v = rng.uniform_int(kSynthVariants);

    Sample s;
    {
      std::ostringstream id;
      id << 's';
      id.width(5);
      id.fill('0');
      id << i;
      s.id = id.str();
    }
    s.features.resize(static_cast<std::size_t>(d_img));
    for (int d = 0; d < d_img; ++d) {
      s.features[static_cast<std::size_t>(d)] =
          centroids[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] +
          0.05 * rng.normal();
    }
    // variant nudge so the per-sample noun is also visible in feature space
    s.features[static_cast<std::size_t>((3 * c + v) % d_img)] += 0.6;

    const std::string noun = kSynthNouns[(3 * c + v) % kSynthNounBank];
    const std::string verb = kSynthVerbs[c % 16];
    const std::string place = kSynthPlaces[c % 8];
    const std::string wh = kWhWords[c % 7];
    s.captions.push_back({"a", noun, verb, "near", "the", place});
    s.questions.push_back({wh, "is", "the", noun, verb, "?"});

    if (opts.with_place) {
      s.place_features.assign(kPlaceDim, 0.0);
      for (double& p : s.place_features) p = 0.02 * rng.normal();
      s.place_features[static_cast<std::size_t>((37 * c + v) % kPlaceDim)] += 1.0;
    }
    if (opts.with_grid) {
      s.grid_features.assign(kGridRows, std::vector<double>(static_cast<std::size_t>(opts.grid_cols)));
      for (int r = 0; r < kGridRows; ++r) {
        for (int e = 0; e < opts.grid_cols; ++e) {
          s.grid_features[static_cast<std::size_t>(r)][static_cast<std::size_t>(e)] =
              0.3 * centroids[static_cast<std::size_t>(c)][static_cast<std::size_t>((r * 31 + e) % d_img)] +
              0.05 * rng.normal();
        }
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace vqglab
