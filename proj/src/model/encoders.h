#pragma once

#include <memory>

#include "eswm/model/network.h"

namespace eswm {

/// Pre-norm transformer encoder without positional encoding. Every layer but
/// the last processes all tokens; the last one only produces the query
/// column, which is all the read-out heads consume.
template <typename T>
std::unique_ptr<SequenceEncoder<T>> make_transformer_encoder(const ModelConfig& cfg,
                                                             ParameterSet<T>& params,
                                                             Rng& init_rng);

/// Stacked LSTM reading the bank tokens then the query token.
template <typename T>
std::unique_ptr<SequenceEncoder<T>> make_lstm_encoder(const ModelConfig& cfg,
                                                      ParameterSet<T>& params,
                                                      Rng& init_rng);

}  // namespace eswm
