/*
 * Copyright 2026 The capmatch Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "capmatch/interaction.hpp"

#include <array>

namespace capmatch {

namespace {

template <typename T>
void require_captions(ad::Var<T> captions) {
  if (captions.rows() == 0) fail(ErrorCode::kNoCaptions, "interaction needs at least one caption");
}

template <typename T>
void require_length(ad::Var<T> frames, const ModelConfig& config) {
  if (frames.rows() > config.interaction.max_frames) {
    fail(ErrorCode::kSequenceTooLong, std::to_string(frames.rows()) + " frames exceed max_frames " +
                                          std::to_string(config.interaction.max_frames));
  }
}

}  // namespace

template <typename T>
ad::Var<T> interact_sum(ad::Var<T> frames, ad::Var<T> captions) {
  require_captions(captions);
  return ad::add_rowvec(frames, ad::mean_rows(captions));
}

template <typename T>
ad::Var<T> interact_mlp(ad::Var<T> frames, ad::Var<T> captions, const Bound<T>& p) {
  require_captions(captions);
  const auto global = ad::repeat_rows(ad::mean_rows(captions), frames.rows());
  const std::array<ad::Var<T>, 2> parts{frames, global};
  const auto joined = ad::concat_cols<T>(parts);
  const auto hidden = ad::gelu(ad::linear(joined, p("mlp.w1"), p("mlp.b1")));
  return ad::linear(hidden, p("mlp.w2"), p("mlp.b2"));
}

template <typename T>
ad::Var<T> interact_cross(ad::Var<T> frames, ad::Var<T> captions, const Bound<T>& p,
                          const ModelConfig& config) {
  require_captions(captions);
  require_length(frames, config);
  const auto type = p("cross.type");
  const std::array<ad::Var<T>, 2> parts{ad::add_rowvec(frames, ad::slice_rows(type, 0, 1)),
                                        ad::add_rowvec(captions, ad::slice_rows(type, 1, 1))};
  auto seq = ad::concat_rows<T>(parts);
  for (std::size_t l = 0; l < config.interaction.layers; ++l)
    seq = encoder_block(p, "cross.block" + std::to_string(l), seq, config.heads());
  return ad::slice_rows(seq, 0, frames.rows());
}

template <typename T>
ad::Var<T> interact_coattn(ad::Var<T> frames, ad::Var<T> captions, const Bound<T>& p,
                           const ModelConfig& config) {
  require_captions(captions);
  require_length(frames, config);
  auto [video, caption_stream] =
      coattention_block(p, "coattn.co.v", "coattn.co.c", frames, captions, config.heads());
  (void)caption_stream;
  auto seq = ad::add(video, ad::slice_rows(p("coattn.pos"), 0, frames.rows()));
  for (std::size_t l = 0; l < config.interaction.layers; ++l)
    seq = encoder_block(p, "coattn.temporal" + std::to_string(l), seq, config.heads());
  return seq;
}

template <typename T>
ad::Var<T> enhance_frames(ad::Var<T> frames, ad::Var<T> captions, const Bound<T>& p,
                          const ModelConfig& config) {
  if (captions.rows() == 0) return frames;
  switch (config.interaction.strategy) {
    case Strategy::kNone: return frames;
    case Strategy::kSum: return interact_sum(frames, captions);
    case Strategy::kMlp: return interact_mlp(frames, captions, p);
    case Strategy::kCross: return interact_cross(frames, captions, p, config);
    case Strategy::kCoAttn: return interact_coattn(frames, captions, p, config);
  }
  return frames;
}

#define CAPMATCH_INSTANTIATE_INTERACTION(T)                                                  \
  template ad::Var<T> interact_sum(ad::Var<T>, ad::Var<T>);                                  \
  template ad::Var<T> interact_mlp(ad::Var<T>, ad::Var<T>, const Bound<T>&);                 \
  template ad::Var<T> interact_cross(ad::Var<T>, ad::Var<T>, const Bound<T>&,                \
                                     const ModelConfig&);                                    \
  template ad::Var<T> interact_coattn(ad::Var<T>, ad::Var<T>, const Bound<T>&,               \
                                      const ModelConfig&);                                   \
  template ad::Var<T> enhance_frames(ad::Var<T>, ad::Var<T>, const Bound<T>&,                \
                                     const ModelConfig&);

CAPMATCH_INSTANTIATE_INTERACTION(float)
CAPMATCH_INSTANTIATE_INTERACTION(double)

#undef CAPMATCH_INSTANTIATE_INTERACTION

}  // namespace capmatch
