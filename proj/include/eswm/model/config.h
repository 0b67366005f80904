#pragma once

#include <string>

#include "eswm/hexgrid.h"

namespace eswm {

enum class Arch { Transformer, Lstm };
/// Which heads contribute to the loss: every head (copying the visible
/// components too) or only the head of the masked component.
enum class LossScope { AllHeads, MaskedOnly };

std::string to_string(Arch a);
std::string to_string(LossScope s);
Arch parse_arch(const std::string& s);
LossScope parse_loss_scope(const std::string& s);

struct ModelConfig {
  Arch arch = Arch::Transformer;
  int layers = 2;
  int embed_dim = 128;
  int heads = 4;
  int ff_dim = 512;
  double dropout = 0.1;
  int state_vocab = 19;
  int action_vocab = kNumActions;
  bool idk_enabled = true;
  StateEncoding state_encoding = StateEncoding::Integer;
  LossScope loss_scope = LossScope::AllHeads;

  /// Classes on a state head: vocab (+1 IDK) for integer states, six
  /// independent bits for six-bit states.
  int state_classes() const;
  int action_classes() const { return action_vocab + (idk_enabled ? 1 : 0); }
  int state_idk_class() const { return state_vocab; }
  int action_idk_class() const { return action_vocab; }
  bool six_bit() const { return state_encoding == StateEncoding::SixBit; }

  /// Default query-activation layer (1-based) for latent-map analyses:
  /// ceil(L / 2).
  int middle_layer() const { return (layers + 1) / 2; }

  /// Desk-scale Random Wall profile: 2 layers, 128 wide, 4 heads, ff 512.
  static ModelConfig desk_random_wall(int radius = 2);
  /// Desk-scale Open Arena profile (six-bit states, width divisible by 6).
  static ModelConfig desk_open_arena();
  /// Full-scale profiles (Random Wall: 1024 wide; Open Arena: 768 wide;
  /// 8 heads, ff 2048).
  static ModelConfig full_random_wall(int layers = 14);
  static ModelConfig full_open_arena(int layers = 4);
};

/// Throws std::invalid_argument naming the offending field.
void validate(const ModelConfig& cfg);

/// Environment family/encoding and model vocabulary agree.
void check_compatible(const ModelConfig& model, const EnvConfig& env);

}  // namespace eswm
