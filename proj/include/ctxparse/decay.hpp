#pragma once

#include <string>
#include <vector>

#include "ctxparse/nn.hpp"
#include "ctxparse/schema_graph.hpp"
#include "ctxparse/tensor.hpp"

namespace ctxparse {

enum class DecayLevel { TOKEN, UTTERANCE, BOTH };
enum class DecayKind { GATE, SCHEDULE };
enum class ScheduleKind { LINEAR, EXPONENTIAL, INVERSE_SIGMOID };

/// linear: k - c*t (c >= 0); exponential: k^t (0 < k < 1);
/// inverse sigmoid: k / (k + exp(t/k)) (k >= 1).
struct Schedule {
  ScheduleKind kind = ScheduleKind::LINEAR;
  double k = 1.0;
  double c = 0.0;
};

struct DecayConfig {
  DecayLevel level = DecayLevel::UTTERANCE;
  DecayKind kind = DecayKind::SCHEDULE;
  Schedule schedule{ScheduleKind::LINEAR, 1.0, 0.1};
  /// Schedule outputs are clamped into [floor, 1]. Gate outputs are not:
  /// flooring a sigmoid would cut its gradient.
  double floor = 0.8;
  /// BOTH level: weight = lambda*token + (1-lambda)*utterance.
  double lambda = 0.5;
};

/// Schedule value at integer distance t, clamped to [floor, 1]. Throws
/// InvalidSchedule on violated parameter constraints or negative t.
double schedule_decay(const Schedule& schedule, int t, double floor);

/// One learned decay gate: sigmoid(relu(h.u).v), scalar in (0,1).
struct GateParams {
  Tensor u;  // [d, d]
  Tensor v;  // [d, 1]

  static GateParams create(ParamStore& store, const std::string& prefix,
                           int dim, Rng& rng);
};

Tensor gate_decay(Tape& tape, const Tensor& h, const GateParams& p);

/// m split as [m^IU, m^S]. m_s is all ones: header entries never decay.
struct DecayVector {
  Tensor m_iu;  // [1, num_tokens]
  Tensor m_s;   // [1, num_headers]
  Tensor m;     // [1, num_tokens + num_headers]
};

/// Per-node weights for attention at turn current_turn (0-based). Tokens of
/// the current turn and every header entry get exactly 1. Schedule distance
/// is the position gap to the current turn's first token in the input
/// concatenation for TOKEN level and the turn gap for UTTERANCE level. Gate
/// kind reads token_states (per token node) or turn_states (per turn)
/// through the corresponding GateParams.
DecayVector assemble_decay(Tape& tape, const ContextGraph& graph,
                           const std::vector<Tensor>& token_states,
                           const std::vector<Tensor>& turn_states,
                           const GateParams* token_gate,
                           const GateParams* utterance_gate,
                           const DecayConfig& config, int current_turn);

}  // namespace ctxparse
