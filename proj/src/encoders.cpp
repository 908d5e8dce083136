#include "vqglab/encoders.hpp"

#include <algorithm>
#include <stdexcept>

namespace vqglab {

Variant variant_from_string(const std::string& s) {
  if (s == "mdn") return Variant::Mdn;
  if (s == "diff-image") return Variant::DiffImage;
  if (s == "tag") return Variant::Tag;
  if (s == "place") return Variant::Place;
  throw std::invalid_argument("unknown variant '" + s +
                              "' (expected mdn|diff-image|tag|place)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Mdn: return "mdn";
    case Variant::DiffImage: return "diff-image";
    case Variant::Tag: return "tag";
    case Variant::Place: return "place";
  }
  return "?";
}

TagCombine tag_combine_from_string(const std::string& s) {
  if (s == "concat") return TagCombine::Concat;
  if (s == "add") return TagCombine::Add;
  if (s == "mul") return TagCombine::Mul;
  if (s == "conv1d") return TagCombine::Conv1d;
  throw std::invalid_argument("unknown tag combine mode '" + s +
                              "' (expected concat|add|mul|conv1d)");
}

// ---- LSTM ---------------------------------------------------------------------

LstmState lstm_zero_state(int hidden) {
  return {Tensor::zeros({hidden}), Tensor::zeros({hidden})};
}

LstmState lstm_step(const LstmParams& p, const Tensor& x, const LstmState& prev) {
  auto gate = [&](const Tensor& w, const Tensor& u, const Tensor& b) {
    return add(add(matmul(w, x), matmul(u, prev.h)), b);
  };
  const Tensor i = sigmoid(gate(p.wi, p.ui, p.bi));
  const Tensor f = sigmoid(gate(p.wf, p.uf, p.bf));
  const Tensor o = sigmoid(gate(p.wo, p.uo, p.bo));
  const Tensor g = tanh(gate(p.wg, p.ug, p.bg));
  const Tensor c = add(mul(f, prev.c), mul(i, g));
  const Tensor h = mul(o, tanh(c));
  return {h, c};
}

// ---- encoders -------------------------------------------------------------------

Tensor encode_image(const std::vector<double>& features, const EncoderParams& p) {
  const int d = p.img_w.shape[1];
  if (static_cast<int>(features.size()) != d) {
    throw std::invalid_argument("encode_image: feature length " +
                                std::to_string(features.size()) + ", expected " +
                                std::to_string(d));
  }
  return tanh(add(matmul(p.img_w, Tensor::vec(features)), p.img_b));
}

Tensor encode_caption(const std::vector<int>& token_ids, const EncoderParams& p) {
  if (token_ids.empty()) throw std::invalid_argument("encode_caption: empty sequence");
  const int e = p.embed.shape[1];
  LstmState st = lstm_zero_state(p.caption.bi.shape[0]);
  for (int id : token_ids) {
    const Tensor x = reshape(embedding_lookup(p.embed, {id}), {e});
    st = lstm_step(p.caption, x, st);
  }
  return st.h;
}

Tensor encode_place(const std::vector<double>& place_features, const EncoderParams& p) {
  if (p.place_w.numel() == 0) {
    throw std::invalid_argument("encode_place: model has no place projection; "
                                "train with the place variant");
  }
  if (static_cast<int>(place_features.size()) != kPlaceDim) {
    throw std::invalid_argument("encode_place: feature length " +
                                std::to_string(place_features.size()) + ", expected " +
                                std::to_string(kPlaceDim));
  }
  return tanh(add(matmul(p.place_w, Tensor::vec(place_features)), p.place_b));
}

namespace {

// embed -> convs (widths 1..3) -> max-pool over time -> concat, giving [3F]
Tensor tag_category(const std::array<std::string, kTagSlots>& slots, const EncoderParams& p,
                    const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(kTagSlots);
  for (const std::string& t : slots) ids.push_back(vocab.id_of(t));
  const Tensor e = embedding_lookup(p.embed, ids);  // [5, E]
  const Tensor p1 = row_max(temporal_conv(e, p.tag.conv1_w, p.tag.conv1_b, 1));
  const Tensor p2 = row_max(temporal_conv(e, p.tag.conv2_w, p.tag.conv2_b, 2));
  const Tensor p3 = row_max(temporal_conv(e, p.tag.conv3_w, p.tag.conv3_b, 3));
  return concat({p1, p2, p3}, 0);
}

}  // namespace

Tensor encode_tags(const TagSet& tags, const EncoderParams& p, const Vocabulary& vocab,
                   TagCombine combine) {
  if (p.tag.conv1_w.numel() == 0) {
    throw std::invalid_argument("encode_tags: model has no tag net; "
                                "train with the tag variant");
  }
  const Tensor un = tag_category(tags.noun, p, vocab);
  const Tensor uv = tag_category(tags.verb, p, vocab);
  const Tensor uw = tag_category(tags.wh, p, vocab);
  Tensor merged;
  switch (combine) {
    case TagCombine::Concat:
      merged = concat({un, uv, uw}, 0);
      break;
    case TagCombine::Add:
      merged = add(add(un, uv), uw);
      break;
    case TagCombine::Mul:
      merged = mul(mul(un, uv), uw);
      break;
    case TagCombine::Conv1d: {
      const int width = un.shape[0];
      const Tensor rows = concat({reshape(un, {1, width}), reshape(uv, {1, width}),
                                  reshape(uw, {1, width})},
                                 0);  // [3, 3F]
      const Tensor c = temporal_conv(rows, p.tag.comb_w, p.tag.comb_b, 3);  // [1, 3F]
      merged = reshape(c, {c.shape[1]});
      break;
    }
  }
  return add(matmul(p.tag.proj_w, merged), p.tag.proj_b);
}

// ---- towers --------------------------------------------------------------------

TowerEmbedding encode_tower(const Sample& s, const EncoderParams& p, const Vocabulary& vocab,
                            Variant variant, bool need_grid, TagCombine combine,
                            const PosLexicon* lexicon) {
  TowerEmbedding out;
  out.image = encode_image(s.features, p);
  const int hidden = p.img_b.shape[0];
  switch (variant) {
    case Variant::Mdn: {
      if (s.captions.empty()) {
        throw std::invalid_argument("sample '" + s.id + "' has no caption for the mdn variant");
      }
      out.context = encode_caption(vocab.encode(s.captions[0]), p);
      break;
    }
    case Variant::DiffImage:
      // image-only: the caption channel degenerates to a constant zero
      out.context = Tensor::zeros({hidden});
      break;
    case Variant::Tag: {
      TagSet tags;
      if (s.tags) {
        tags = *s.tags;
      } else if (lexicon != nullptr) {
        if (s.captions.empty()) {
          throw std::invalid_argument("sample '" + s.id + "' has no caption to tag");
        }
        tags = pos_tags(s.captions[0], *lexicon);
      } else {
        throw std::invalid_argument("sample '" + s.id +
                                    "' has no tags and the lexicon is disabled; supply "
                                    "\"tags\" in the dataset or enable the builtin lexicon");
      }
      out.context = encode_tags(tags, p, vocab, combine);
      break;
    }
    case Variant::Place: {
      if (s.place_features.empty()) {
        throw std::invalid_argument("sample '" + s.id +
                                    "' has no place_features; the place variant cannot run");
      }
      out.context = encode_place(s.place_features, p);
      break;
    }
  }
  if (need_grid) {
    if (s.grid_features.empty()) {
      throw std::invalid_argument("sample '" + s.id +
                                  "' has no grid_features; supply grid_features to use the "
                                  "attention mixture");
    }
    const int rows = static_cast<int>(s.grid_features.size());
    const int cols = static_cast<int>(s.grid_features[0].size());
    Tensor grid = Tensor::zeros({rows, cols});
    for (int r = 0; r < rows; ++r)
      std::copy(s.grid_features[static_cast<std::size_t>(r)].begin(),
                s.grid_features[static_cast<std::size_t>(r)].end(),
                grid.data.begin() + static_cast<std::ptrdiff_t>(r) * cols);
    out.grid = std::move(grid);
  }
  return out;
}

TripletEmbedding triplet_encode(const Sample& target, const Sample& supporting,
                                const Sample& contrasting, const EncoderParams& p,
                                const Vocabulary& vocab, Variant variant, bool need_grid,
                                TagCombine combine, const PosLexicon* lexicon) {
  TripletEmbedding out;
  out.target = encode_tower(target, p, vocab, variant, need_grid, combine, lexicon);
  out.supporting = encode_tower(supporting, p, vocab, variant, need_grid, combine, lexicon);
  out.contrasting = encode_tower(contrasting, p, vocab, variant, need_grid, combine, lexicon);
  return out;
}

}  // namespace vqglab
