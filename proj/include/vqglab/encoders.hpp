#pragma once

#include <string>
#include <vector>

#include "vqglab/data.hpp"
#include "vqglab/tensor.hpp"

namespace vqglab {

enum class Variant { Mdn, DiffImage, Tag, Place };
enum class TagCombine { Concat, Add, Mul, Conv1d };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);
TagCombine tag_combine_from_string(const std::string& s);

// Standard LSTM cell, gates i/f/o plus candidate g. One parameter set is
// shared wherever the cell appears in a triplet tower.
struct LstmParams {
  Tensor wi, ui, bi;
  Tensor wf, uf, bf;
  Tensor wo, uo, bo;
  Tensor wg, ug, bg;
};

struct LstmState {
  Tensor h, c;
};

LstmState lstm_zero_state(int hidden);
LstmState lstm_step(const LstmParams& p, const Tensor& x, const LstmState& prev);

// Tag embedding net: per category embed -> temporal convs of widths 1,2,3 ->
// max-pool over time -> concat; categories merged by the combine mode; final
// linear to the hidden size.
struct TagNetParams {
  Tensor conv1_w, conv1_b;
  Tensor conv2_w, conv2_b;
  Tensor conv3_w, conv3_b;
  Tensor comb_w, comb_b;  // conv1d combine only
  Tensor proj_w, proj_b;
};

struct EncoderParams {
  Tensor img_w, img_b;    // [H, D_img], [H]
  Tensor embed;           // [V, E]; row 0 (PAD) starts at zero
  LstmParams caption;     // input E, hidden H
  TagNetParams tag;       // allocated for the tag variant
  Tensor place_w, place_b;  // [H, 365], allocated for the place variant
};

// g = tanh(W x + b)
Tensor encode_image(const std::vector<double>& features, const EncoderParams& p);

// final hidden state of the LSTM over embedded tokens
Tensor encode_caption(const std::vector<int>& token_ids, const EncoderParams& p);

Tensor encode_place(const std::vector<double>& place_features, const EncoderParams& p);

Tensor encode_tags(const TagSet& tags, const EncoderParams& p, const Vocabulary& vocab,
                   TagCombine combine);

// One tower's inputs to the mixture module. `context` is the caption-channel
// embedding (caption LSTM, tag net or place projection depending on the
// variant; a zero constant for the image-only variant). `grid` is only set
// when the attention mixture needs the raw cells.
struct TowerEmbedding {
  Tensor image;    // [H]
  Tensor context;  // [H]
  Tensor grid;     // [196, G] or empty
};

struct TripletEmbedding {
  TowerEmbedding target, supporting, contrasting;
};

// Applies the same parameters to all three inputs.
TripletEmbedding triplet_encode(const Sample& target, const Sample& supporting,
                                const Sample& contrasting, const EncoderParams& p,
                                const Vocabulary& vocab, Variant variant,
                                bool need_grid = false,
                                TagCombine combine = TagCombine::Concat,
                                const PosLexicon* lexicon = &PosLexicon::builtin());

TowerEmbedding encode_tower(const Sample& s, const EncoderParams& p, const Vocabulary& vocab,
                            Variant variant, bool need_grid = false,
                            TagCombine combine = TagCombine::Concat,
                            const PosLexicon* lexicon = &PosLexicon::builtin());

}  // namespace vqglab
