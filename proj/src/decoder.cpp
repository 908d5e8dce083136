#include "vqglab/decoder.hpp"

#include <stdexcept>

#include "vqglab/rng.hpp"

namespace vqglab {

Tensor triplet_loss(const Tensor& s, const Tensor& s_pos, const Tensor& s_neg, double alpha) {
  if (alpha <= 0.0) throw std::invalid_argument("triplet_loss: alpha must be positive");
  if (s.shape != s_pos.shape) {
    throw std::invalid_argument("triplet_loss: shape mismatch " + shape_str(s.shape) + " vs " +
                                shape_str(s_pos.shape));
  }
  if (s.shape != s_neg.shape) {
    throw std::invalid_argument("triplet_loss: shape mismatch " + shape_str(s.shape) + " vs " +
                                shape_str(s_neg.shape));
  }
  const Tensor d_pos = squared_l2_distance(s, s_pos);
  const Tensor d_neg = squared_l2_distance(s, s_neg);
  return relu(add(sub(d_pos, d_neg), Tensor::scalar(alpha)));
}

namespace {

void check_question_ids(const std::vector<int>& ids, int n_max) {
  if (ids.size() < 2 || ids.front() != kStartId || ids.back() != kStopId) {
    throw std::invalid_argument(
        "decode_teacher_forced: question must start with START and end with STOP");
  }
  const int body = static_cast<int>(ids.size()) - 2;
  if (body > n_max) {
    throw std::invalid_argument("decode_teacher_forced: question has " + std::to_string(body) +
                                " tokens, exceeding N_max=" + std::to_string(n_max));
  }
}

Tensor embed_token(const DecoderParams& p, int id) {
  return reshape(embedding_lookup(p.embed, {id}), {p.embed.shape[1]});
}

Tensor step_logits(const DecoderParams& p, const Tensor& h) {
  return add(matmul(p.w_out, h), p.b_out);
}

}  // namespace

TeacherForced decode_teacher_forced(const Tensor& context, const std::vector<int>& question_ids,
                                    const DecoderParams& p, int n_max) {
  check_question_ids(question_ids, n_max);
  const int hidden = p.lstm.bi.shape[0];
  if (context.shape != Shape{hidden}) {
    throw std::invalid_argument("decode_teacher_forced: context has shape " +
                                shape_str(context.shape) + ", decoder expects [" +
                                std::to_string(hidden) + "]");
  }

  // step -1 feeds the context vector through the cell
  LstmState st = lstm_step(p.lstm, context, lstm_zero_state(hidden));

  std::vector<Tensor> logits;
  std::vector<int> targets;
  const int steps = static_cast<int>(question_ids.size()) - 1;
  logits.reserve(static_cast<std::size_t>(steps));
  targets.reserve(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    st = lstm_step(p.lstm, embed_token(p, question_ids[static_cast<std::size_t>(t)]), st);
    logits.push_back(step_logits(p, st.h));
    targets.push_back(question_ids[static_cast<std::size_t>(t + 1)]);
  }

  TeacherForced out;
  out.loss = softmax_cross_entropy(logits, targets);
  out.step_probs.reserve(logits.size());
  for (const Tensor& l : logits) out.step_probs.push_back(softmax_values(l.data));
  return out;
}

namespace {

int argmax_lowest(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
  return best;
}

template <typename PickFn>
std::vector<int> generate(const Tensor& context, const DecoderParams& p, int n_max,
                          PickFn pick) {
  const int hidden = p.lstm.bi.shape[0];
  LstmState st = lstm_step(p.lstm, context, lstm_zero_state(hidden));
  std::vector<int> out;
  int prev = kStartId;
  for (int t = 0; t < n_max + 1; ++t) {  // +1 leaves room for STOP itself
    st = lstm_step(p.lstm, embed_token(p, prev), st);
    const Tensor logits = step_logits(p, st.h);
    const int tok = pick(logits.data);
    if (tok == kStopId) break;
    out.push_back(tok);
    if (static_cast<int>(out.size()) >= n_max) break;
    prev = tok;
  }
  return out;
}

}  // namespace

std::vector<int> generate_argmax(const Tensor& context, const DecoderParams& p, int n_max) {
  return generate(context, p, n_max,
                  [](const std::vector<double>& logits) { return argmax_lowest(logits); });
}

std::vector<int> generate_sample(const Tensor& context, const DecoderParams& p, int n_max,
                                 std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x5a3b));
  return generate(context, p, n_max, [&rng](const std::vector<double>& logits) {
    const std::vector<double> probs = softmax_values(logits);
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  });
}

Tensor total_loss(const std::vector<Tensor>& cross_entropy, const std::vector<Tensor>& triplet,
                  double gamma) {
  if (cross_entropy.empty()) throw std::invalid_argument("total_loss: empty batch");
  if (!triplet.empty() && triplet.size() != cross_entropy.size()) {
    throw std::invalid_argument("total_loss: " + std::to_string(cross_entropy.size()) +
                                " cross-entropy terms vs " + std::to_string(triplet.size()) +
                                " triplet terms");
  }
  Tensor acc;
  for (std::size_t i = 0; i < cross_entropy.size(); ++i) {
    Tensor term = cross_entropy[i];
    if (!triplet.empty()) term = add(term, scale(triplet[i], gamma));
    acc = i == 0 ? term : add(acc, term);
  }
  return scale(acc, 1.0 / static_cast<double>(cross_entropy.size()));
}

}  // namespace vqglab
