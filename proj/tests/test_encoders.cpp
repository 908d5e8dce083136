#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vqglab/model.hpp"
#include "vqglab/rng.hpp"

using namespace vqglab;

namespace {

RunConfig small_config(const char* variant, const char* mixture = "joint") {
  RunConfig cfg;
  cfg.dims.d_img = 10;
  cfg.dims.hidden = 12;
  cfg.dims.embed = 8;
  cfg.dims.tag_filters = 4;
  cfg.dims.grid = 12;
  cfg.variant = variant;
  cfg.mixture = mixture;
  cfg.seed = 2;
  return cfg;
}

Vocabulary toy_vocab() {
  return Vocabulary::build({{"what", "is", "the", "dog", "eating", "man", "riding",
                             "skateboard", "?", "a", "near", "park"}},
                           1);
}

std::vector<Tensor> wide(std::vector<Tensor> ts, std::uint64_t seed) {
  Rng rng(seed);
  for (Tensor& t : ts)
    for (double& v : t.data) v = rng.uniform(-0.4, 0.4);
  return ts;
}

std::vector<Tensor> lstm_tensors(const LstmParams& p) {
  return {p.wi, p.ui, p.bi, p.wf, p.uf, p.bf, p.wo, p.uo, p.bo, p.wg, p.ug, p.bg};
}

void assign_lstm(LstmParams& p, std::vector<Tensor>& l, std::size_t base) {
  p.wi = l[base + 0];
  p.ui = l[base + 1];
  p.bi = l[base + 2];
  p.wf = l[base + 3];
  p.uf = l[base + 4];
  p.bf = l[base + 5];
  p.wo = l[base + 6];
  p.uo = l[base + 7];
  p.bo = l[base + 8];
  p.wg = l[base + 9];
  p.ug = l[base + 10];
  p.bg = l[base + 11];
}

}  // namespace

TEST_CASE("encode_image: zero input with zero bias gives the zero embedding") {
  const RunConfig cfg = small_config("mdn");
  ModelParams m = init_params(cfg, toy_vocab().size(), 12);
  const Tensor g = encode_image(std::vector<double>(10, 0.0), m.enc);
  REQUIRE(g.shape == Shape{12});
  for (double v : g.data) CHECK(v == 0.0);  // bias starts at zero

  CHECK_THROWS_WITH_AS(encode_image(std::vector<double>(7, 1.0), m.enc),
                       doctest::Contains("expected 10"), std::invalid_argument);
}

TEST_CASE("encoder outputs have the hidden length and finite entries") {
  const Vocabulary vocab = toy_vocab();
  RunConfig cfg = small_config("tag");
  ModelParams m = init_params(cfg, vocab.size(), 12);
  Rng rng(5);
  std::vector<double> img(10);
  for (double& v : img) v = rng.uniform(-1.0, 1.0);

  const Tensor g = encode_image(img, m.enc);
  const Tensor f = encode_caption(vocab.encode({"a", "man", "riding"}), m.enc);
  const TagSet tags = pos_tags({"a", "man", "riding", "a", "skateboard"},
                               PosLexicon::builtin());
  const Tensor t = encode_tags(tags, m.enc, vocab, TagCombine::Concat);
  for (const Tensor* out : {&g, &f, &t}) {
    REQUIRE(out->shape == Shape{12});
    for (double v : out->data) CHECK(std::isfinite(v));
  }
}

TEST_CASE("encode_caption: base case, order sensitivity, degenerate weights") {
  const Vocabulary vocab = toy_vocab();
  const RunConfig cfg = small_config("mdn");
  ModelParams m = init_params(cfg, vocab.size(), 12);

  CHECK_THROWS_AS(encode_caption({}, m.enc), std::invalid_argument);

  // single token: one step from the zero state
  const Tensor one = encode_caption(vocab.encode({"dog"}), m.enc);
  {
    const int e = m.enc.embed.shape[1];
    const Tensor x = reshape(embedding_lookup(m.enc.embed, {vocab.id_of("dog")}), {e});
    const LstmState st = lstm_step(m.enc.caption, x, lstm_zero_state(12));
    CHECK(one.data == st.h.data);
  }

  const Tensor fwd = encode_caption(vocab.encode({"dog", "eating", "man"}), m.enc);
  const Tensor rev = encode_caption(vocab.encode({"man", "eating", "dog"}), m.enc);
  CHECK(fwd.data != rev.data);

  // all-zero gates squash everything to the zero vector
  ModelParams zero = m;
  zero.visit([](const std::string&, Tensor& t) { t = Tensor::zeros(t.shape); });
  const Tensor z = encode_caption(vocab.encode({"dog", "man"}), zero.enc);
  for (double v : z.data) CHECK(v == 0.0);
}

TEST_CASE("encode_place: lengths and absence") {
  const Vocabulary vocab = toy_vocab();
  ModelParams m = init_params(small_config("place"), vocab.size(), 12);
  std::vector<double> place(kPlaceDim, 0.0);
  const Tensor p = encode_place(place, m.enc);
  REQUIRE(p.shape == Shape{12});
  for (double v : p.data) CHECK(v == 0.0);  // zero input, zero bias

  CHECK_THROWS_WITH_AS(encode_place(std::vector<double>(10, 0.0), m.enc),
                       doctest::Contains("365"), std::invalid_argument);

  ModelParams no_place = init_params(small_config("mdn"), vocab.size(), 12);
  CHECK_THROWS_WITH_AS(encode_place(place, no_place.enc), doctest::Contains("place"),
                       std::invalid_argument);
}

TEST_CASE("encode_tags: all-PAD input rides the bias-only path") {
  const Vocabulary vocab = toy_vocab();
  ModelParams m = init_params(small_config("tag"), vocab.size(), 12);
  TagSet pads;
  pads.noun.fill(kPadToken);
  pads.verb.fill(kPadToken);
  pads.wh.fill(kPadToken);
  const Tensor out = encode_tags(pads, m.enc, vocab, TagCombine::Concat);

  // PAD embeds to the zero row, so convolutions emit their biases (zero at
  // init); the result is exactly the projection bias
  CHECK(out.data == m.enc.tag.proj_b.data);

  // any all-PAD bundle gives the same constant
  const Tensor again = encode_tags(pads, m.enc, vocab, TagCombine::Concat);
  CHECK(out.data == again.data);
}

TEST_CASE("encode_tags: every combine mode emits hidden-length output") {
  const Vocabulary vocab = toy_vocab();
  const TagSet tags = pos_tags({"a", "man", "riding", "a", "skateboard"},
                               PosLexicon::builtin());
  for (const char* mode : {"concat", "add", "mul", "conv1d"}) {
    RunConfig cfg = small_config("tag");
    cfg.tag_combine = mode;
    ModelParams m = init_params(cfg, vocab.size(), 12);
    const Tensor out = encode_tags(tags, m.enc, vocab, tag_combine_from_string(mode));
    REQUIRE(out.shape == Shape{12});
  }
  CHECK_THROWS_AS(tag_combine_from_string("frobnicate"), std::invalid_argument);
}

TEST_CASE("max-pool over time ignores duplicated rows") {
  const Tensor base = Tensor::mat(3, 4, {0.1, -0.3, 0.5, 0.2,
                                         0.7, 0.0, -0.1, 0.4,
                                         -0.2, 0.6, 0.3, -0.5});
  const Tensor dup = Tensor::mat(4, 4, {0.1, -0.3, 0.5, 0.2,
                                        0.1, -0.3, 0.5, 0.2,
                                        0.7, 0.0, -0.1, 0.4,
                                        -0.2, 0.6, 0.3, -0.5});
  CHECK(row_max(base).data == row_max(dup).data);
}

TEST_CASE("triplet encoding: parameter sharing across towers") {
  const Vocabulary vocab = toy_vocab();
  ModelParams m = init_params(small_config("mdn"), vocab.size(), 12);
  Dataset ds = synth_dataset(3, 6, 2, 10);

  const TripletEmbedding trip = triplet_encode(ds.samples[0], ds.samples[0], ds.samples[2],
                                               m.enc, vocab, Variant::Mdn);
  // identical target and supporting inputs give identical embedding pairs
  CHECK(trip.target.image.data == trip.supporting.image.data);
  CHECK(trip.target.context.data == trip.supporting.context.data);

  // swapping supporting and contrasting swaps the slots only
  const TripletEmbedding swapped = triplet_encode(ds.samples[0], ds.samples[2],
                                                  ds.samples[0], m.enc, vocab, Variant::Mdn);
  CHECK(swapped.supporting.image.data == trip.contrasting.image.data);
  CHECK(swapped.contrasting.image.data == trip.supporting.image.data);

  // one parameter set: the same input encodes identically in any slot
  const TowerEmbedding alone = encode_tower(ds.samples[2], m.enc, vocab, Variant::Mdn);
  CHECK(alone.image.data == trip.contrasting.image.data);
  CHECK(alone.context.data == trip.contrasting.context.data);
}

TEST_CASE("diff-image variant omits the caption channel") {
  const Vocabulary vocab = toy_vocab();
  ModelParams m = init_params(small_config("diff-image"), vocab.size(), 12);
  Dataset ds = synth_dataset(3, 4, 2, 10);
  const TowerEmbedding t = encode_tower(ds.samples[0], m.enc, vocab, Variant::DiffImage);
  for (double v : t.context.data) CHECK(v == 0.0);
}

TEST_CASE("variant errors on missing modality") {
  const Vocabulary vocab = toy_vocab();
  ModelParams m = init_params(small_config("place"), vocab.size(), 12);
  Dataset ds = synth_dataset(3, 4, 2, 10);  // no place features
  CHECK_THROWS_WITH_AS(encode_tower(ds.samples[0], m.enc, vocab, Variant::Place),
                       doctest::Contains("place"), std::invalid_argument);
}

TEST_CASE("gradients flow through each encoder path") {
  const Vocabulary vocab = toy_vocab();
  Rng rng(17);
  Tensor probe = Tensor::zeros({12});
  for (double& v : probe.data) v = rng.uniform(0.5, 1.0);

  // image path
  {
    ModelParams proto = init_params(small_config("mdn"), vocab.size(), 12);
    std::vector<double> img(10);
    for (double& v : img) v = rng.uniform(-1.0, 1.0);
    const double err = grad_check(
        [&](Tape&, std::vector<Tensor>& l) {
          EncoderParams e = proto.enc;
          e.img_w = l[0];
          e.img_b = l[1];
          return reduce_sum(mul(encode_image(img, e), probe));
        },
        wide({proto.enc.img_w, proto.enc.img_b}, 3), 1e-5);
    CHECK(err < 1e-6);
  }

  // caption path
  {
    ModelParams proto = init_params(small_config("mdn"), vocab.size(), 12);
    std::vector<Tensor> params = {proto.enc.embed};
    for (const Tensor& t : lstm_tensors(proto.enc.caption)) params.push_back(t);
    const std::vector<int> ids = vocab.encode({"man", "riding"});
    const double err = grad_check(
        [&](Tape&, std::vector<Tensor>& l) {
          EncoderParams e = proto.enc;
          e.embed = l[0];
          assign_lstm(e.caption, l, 1);
          return reduce_sum(mul(encode_caption(ids, e), probe));
        },
        wide(std::move(params), 5), 1e-5);
    CHECK(err < 1e-4);
  }

  // place path
  {
    ModelParams proto = init_params(small_config("place"), vocab.size(), 12);
    std::vector<double> place(kPlaceDim);
    for (double& v : place) v = rng.uniform(-1.0, 1.0);
    const double err = grad_check(
        [&](Tape&, std::vector<Tensor>& l) {
          EncoderParams e = proto.enc;
          e.place_w = l[0];
          e.place_b = l[1];
          return reduce_sum(mul(encode_place(place, e), probe));
        },
        wide({proto.enc.place_w, proto.enc.place_b}, 7), 1e-5);
    CHECK(err < 1e-6);
  }

  // tag path, every combine mode
  for (const char* mode : {"concat", "add", "mul", "conv1d"}) {
    RunConfig cfg = small_config("tag");
    cfg.tag_combine = mode;
    ModelParams proto = init_params(cfg, vocab.size(), 12);
    const TagCombine combine = tag_combine_from_string(mode);
    const TagSet tags = pos_tags({"a", "man", "riding", "a", "skateboard"},
                                 PosLexicon::builtin());
    std::vector<Tensor> params = {proto.enc.embed,      proto.enc.tag.conv1_w,
                                  proto.enc.tag.conv1_b, proto.enc.tag.conv2_w,
                                  proto.enc.tag.conv2_b, proto.enc.tag.conv3_w,
                                  proto.enc.tag.conv3_b, proto.enc.tag.proj_w,
                                  proto.enc.tag.proj_b};
    const bool has_comb = combine == TagCombine::Conv1d;
    if (has_comb) {
      params.push_back(proto.enc.tag.comb_w);
      params.push_back(proto.enc.tag.comb_b);
    }
    const double err = grad_check(
        [&](Tape&, std::vector<Tensor>& l) {
          EncoderParams e = proto.enc;
          e.embed = l[0];
          e.tag.conv1_w = l[1];
          e.tag.conv1_b = l[2];
          e.tag.conv2_w = l[3];
          e.tag.conv2_b = l[4];
          e.tag.conv3_w = l[5];
          e.tag.conv3_b = l[6];
          e.tag.proj_w = l[7];
          e.tag.proj_b = l[8];
          if (has_comb) {
            e.tag.comb_w = l[9];
            e.tag.comb_b = l[10];
          }
          return reduce_sum(mul(encode_tags(tags, e, vocab, combine), probe));
        },
        wide(std::move(params), 11), 1e-5);
    INFO(mode);
    CHECK(err < 1e-4);
  }
}
