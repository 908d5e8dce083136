#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace vqglab {

// File or schema problems surface as IoError; content/contract problems as
// std::invalid_argument. The CLI maps these to exit codes 2 and 1.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Tokens = std::vector<std::string>;

// Lowercases, splits punctuation into single-char tokens, keeps apostrophe
// clitics attached to the following letters ("man's" -> man, 's).
Tokens tokenize(const std::string& text);

std::string join_tokens(const Tokens& toks);

// Reserved ids 0..3. The tokenizer can never produce these surface forms
// from raw text (angle brackets split into separate tokens).
constexpr int kPadId = 0;
constexpr int kStartId = 1;
constexpr int kStopId = 2;
constexpr int kUnkId = 3;
extern const char* const kPadToken;
extern const char* const kStartToken;
extern const char* const kStopToken;
extern const char* const kUnkToken;

class Vocabulary {
 public:
  Vocabulary();  // reserved entries only

  // Tokens with corpus frequency >= min_count get ids, assigned in
  // descending frequency then lexicographic order. Empty corpus is an error.
  static Vocabulary build(const std::vector<Tokens>& corpus, int min_count);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id_of(const std::string& token) const;  // kUnkId for unknown
  const std::string& token_of(int id) const;
  bool contains(const std::string& token) const;

  std::vector<int> encode(const Tokens& tokens) const;
  Tokens decode(const std::vector<int>& ids) const;

  const std::vector<std::string>& tokens() const { return id_to_token_; }
  static Vocabulary from_tokens(const std::vector<std::string>& id_to_token);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

// Per-category tag slots, padded with kPadToken to exactly kTagSlots tokens.
constexpr int kTagSlots = 5;
struct TagSet {
  std::array<std::string, kTagSlots> noun;
  std::array<std::string, kTagSlots> verb;
  std::array<std::string, kTagSlots> wh;
  bool operator==(const TagSet&) const = default;
};

// Bundled word -> {noun|verb} table; the wh category is the fixed question
// word set {why, how, what, when, where, who, which}.
class PosLexicon {
 public:
  static const PosLexicon& builtin();
  bool is_noun(const std::string& token) const;
  bool is_verb(const std::string& token) const;
  bool is_wh(const std::string& token) const;

 private:
  PosLexicon();
  std::unordered_map<std::string, char> table_;  // 'n' or 'v'
};

// First <=5 tokens per category in sentence order, padded with kPadToken.
TagSet pos_tags(const Tokens& tokens, const PosLexicon& lexicon);

constexpr int kGridRows = 196;
constexpr int kGridColsDefault = 512;
constexpr int kPlaceDim = 365;

struct Sample {
  std::string id;
  std::vector<double> features;                      // length D_img
  std::vector<std::vector<double>> grid_features;    // optional, kGridRows rows
  std::vector<double> place_features;                // optional, length 365
  std::vector<Tokens> captions;                      // >= 1
  std::vector<Tokens> questions;                     // >= 1, each non-empty
  std::optional<TagSet> tags;
};

struct Dataset {
  std::vector<Sample> samples;
  std::string split = "train";

  const Sample& by_id(const std::string& id) const;
  int feature_dim() const;
  int grid_cols() const;  // 0 when no sample carries a grid
};

struct SchemaConfig {
  int d_img = 4096;
  int grid_cols = kGridColsDefault;
};

// JSON-Lines, one object per line:
// {"id", "features", "grid_features"?, "place_features"?, "captions",
//  "questions", "tags"?}. Errors carry the line number or sample id.
Dataset load_dataset(const std::string& path, const SchemaConfig& schema);
void save_dataset(const Dataset& ds, const std::string& path);

struct SynthOptions {
  bool with_grid = false;
  int grid_cols = kGridColsDefault;
  bool with_place = false;
};

// Deterministic cluster-structured toy data: features are centroid + small
// noise, captions/questions come from per-cluster template families (all
// template words are in the builtin lexicon), so nearest neighbours share
// phrasing and far clusters differ. Pure in all arguments.
Dataset synth_dataset(std::uint64_t seed, int n_samples, int n_clusters, int d_img,
                      const SynthOptions& opts = {});

// Cluster label the generator assigned to sample index i.
int synth_cluster_of(int sample_index, int n_clusters);

}  // namespace vqglab
