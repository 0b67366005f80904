#include "eswm/model/config.h"

#include <stdexcept>

namespace eswm {

std::string to_string(Arch a) { return a == Arch::Transformer ? "transformer" : "lstm"; }
std::string to_string(LossScope s) {
  return s == LossScope::AllHeads ? "all_heads" : "masked_only";
}
Arch parse_arch(const std::string& s) {
  if (s == "transformer") return Arch::Transformer;
  if (s == "lstm") return Arch::Lstm;
  throw std::invalid_argument("unknown architecture '" + s + "'");
}
LossScope parse_loss_scope(const std::string& s) {
  if (s == "all_heads") return LossScope::AllHeads;
  if (s == "masked_only") return LossScope::MaskedOnly;
  throw std::invalid_argument("unknown loss scope '" + s + "'");
}

int ModelConfig::state_classes() const {
  if (six_bit()) return 6;
  return state_vocab + (idk_enabled ? 1 : 0);
}

ModelConfig ModelConfig::desk_random_wall(int radius) {
  ModelConfig c;
  c.state_vocab = EnvConfig::random_wall(radius).vocab_size;
  return c;
}

ModelConfig ModelConfig::desk_open_arena() {
  ModelConfig c;
  c.embed_dim = 120;
  c.state_vocab = 64;
  c.idk_enabled = false;
  c.state_encoding = StateEncoding::SixBit;
  return c;
}

ModelConfig ModelConfig::full_random_wall(int layers) {
  ModelConfig c;
  c.layers = layers;
  c.embed_dim = 1024;
  c.heads = 8;
  c.ff_dim = 2048;
  c.state_vocab = 36;
  return c;
}

ModelConfig ModelConfig::full_open_arena(int layers) {
  ModelConfig c = desk_open_arena();
  c.layers = layers;
  c.embed_dim = 768;
  c.heads = 8;
  c.ff_dim = 2048;
  return c;
}

void validate(const ModelConfig& c) {
  auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
  if (c.layers < 1) fail("model.layers must be >= 1");
  if (c.embed_dim < 1) fail("model.embed_dim must be >= 1");
  if (c.arch == Arch::Transformer) {
    if (c.heads < 1 || c.embed_dim % c.heads != 0) {
      fail("model.embed_dim must be divisible by model.heads");
    }
    if (c.ff_dim < 1) fail("model.ff_dim must be >= 1");
  }
  if (c.dropout < 0.0 || c.dropout >= 1.0) fail("model.dropout must lie in [0, 1)");
  if (c.state_vocab < 1) fail("model.state_vocab must be >= 1");
  if (c.action_vocab != kNumActions) fail("model.action_vocab must be 6");
  if (c.six_bit()) {
    if (c.embed_dim % 6 != 0) fail("model.embed_dim must be divisible by 6 for six_bit states");
    if (c.state_vocab > 64) fail("model.state_vocab must be <= 64 for six_bit states");
    if (c.idk_enabled) fail("model.idk_enabled is not supported with six_bit states");
  }
}

void check_compatible(const ModelConfig& m, const EnvConfig& e) {
  if (m.state_encoding != e.state_encoding) {
    throw std::invalid_argument("model.state_encoding differs from env.state_encoding");
  }
  if (m.state_vocab < e.vocab_size) {
    throw std::invalid_argument("model.state_vocab is smaller than env.vocab_size");
  }
  if (m.idk_enabled != (e.family == EnvFamily::RandomWall)) {
    throw std::invalid_argument("model.idk_enabled must be true exactly for random_wall");
  }
}

}  // namespace eswm
