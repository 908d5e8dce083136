#pragma once

#include <cstdint>
#include <vector>

#include "vqglab/data.hpp"
#include "vqglab/encoders.hpp"
#include "vqglab/tensor.hpp"

namespace vqglab {

// Question decoder: the fused context vector is fed as the step -1 input,
// then the LSTM consumes embedded tokens and projects to vocabulary logits.
struct DecoderParams {
  Tensor embed;        // [V, H]
  LstmParams lstm;     // input H, hidden H
  Tensor w_out, b_out; // [V, H], [V]
};

// Hinge triplet loss max(0, D+ + alpha - D-) with squared Euclidean
// distances; the subgradient at the kink is 0.
Tensor triplet_loss(const Tensor& s, const Tensor& s_pos, const Tensor& s_neg, double alpha);

struct TeacherForced {
  Tensor loss;                                   // mean token NLL (taped)
  std::vector<std::vector<double>> step_probs;   // per predicted position
};

// question_ids must start with START and end with STOP; the question body
// may not exceed n_max tokens. Teacher forcing: each step consumes the
// embedded ground-truth token.
TeacherForced decode_teacher_forced(const Tensor& context, const std::vector<int>& question_ids,
                                    const DecoderParams& p, int n_max);

// Greedy decode; stops at STOP or after n_max tokens. START/STOP are
// stripped from the returned ids. Deterministic (ties pick the lowest id).
std::vector<int> generate_argmax(const Tensor& context, const DecoderParams& p, int n_max);

// As argmax but each token is drawn from the softmax distribution;
// deterministic in seed. No temperature: the plain softmax is sampled.
std::vector<int> generate_sample(const Tensor& context, const DecoderParams& p, int n_max,
                                 std::uint64_t seed);

// Eq-style total: mean over the batch of (cross-entropy + gamma * triplet).
Tensor total_loss(const std::vector<Tensor>& cross_entropy,
                  const std::vector<Tensor>& triplet, double gamma);

}  // namespace vqglab
