#include "ctxparse/decay.hpp"

#include <algorithm>
#include <cmath>

#include "ctxparse/errors.hpp"

namespace ctxparse {

double schedule_decay(const Schedule& schedule, int t, double floor) {
  if (t < 0) throw InvalidSchedule("negative decay distance");
  if (floor < 0.0 || floor > 1.0) {
    throw InvalidSchedule("decay floor outside [0, 1]");
  }
  double raw = 0.0;
  switch (schedule.kind) {
    case ScheduleKind::LINEAR:
      if (schedule.c < 0.0) {
        throw InvalidSchedule("linear schedule requires c >= 0");
      }
      raw = schedule.k - schedule.c * static_cast<double>(t);
      break;
    case ScheduleKind::EXPONENTIAL: {
      if (schedule.k <= 0.0 || schedule.k >= 1.0) {
        throw InvalidSchedule("exponential schedule requires 0 < k < 1");
      }
      // Integer power by repeated multiplication keeps k^0 == 1 and
      // k^1 == k bit-exact.
      raw = 1.0;
      for (int i = 0; i < t; ++i) raw *= schedule.k;
      break;
    }
    case ScheduleKind::INVERSE_SIGMOID:
      if (schedule.k < 1.0) {
        throw InvalidSchedule("inverse sigmoid schedule requires k >= 1");
      }
      raw = schedule.k /
            (schedule.k + std::exp(static_cast<double>(t) / schedule.k));
      break;
  }
  return std::min(1.0, std::max(raw, floor));
}

GateParams GateParams::create(ParamStore& store, const std::string& prefix,
                              int dim, Rng& rng) {
  GateParams p;
  p.u = store.create(prefix + ".u", {dim, dim}, rng);
  p.v = store.create(prefix + ".v", {dim, 1}, rng);
  return p;
}

Tensor gate_decay(Tape& tape, const Tensor& h, const GateParams& p) {
  return tape.sigmoid(tape.matmul(tape.relu(tape.matmul(h, p.u)), p.v));
}

namespace {

void validate_config(const DecayConfig& config) {
  if (config.lambda < 0.0 || config.lambda > 1.0) {
    throw ConfigError("decay lambda outside [0, 1]");
  }
  if (config.floor < 0.0 || config.floor > 1.0) {
    throw ConfigError("decay floor outside [0, 1]");
  }
}

}  // namespace

DecayVector assemble_decay(Tape& tape, const ContextGraph& graph,
                           const std::vector<Tensor>& token_states,
                           const std::vector<Tensor>& turn_states,
                           const GateParams* token_gate,
                           const GateParams* utterance_gate,
                           const DecayConfig& config, int current_turn) {
  validate_config(config);
  const int n = graph.num_tokens();
  const int h = graph.num_headers;
  if (n == 0) throw EmptyInput("assemble_decay on a graph with no tokens");
  if (current_turn < 0 || current_turn >= graph.num_turns) {
    throw ConfigError("current turn outside the graph's turn range");
  }

  const bool need_token =
      config.level == DecayLevel::TOKEN || config.level == DecayLevel::BOTH;
  const bool need_utterance = config.level == DecayLevel::UTTERANCE ||
                              config.level == DecayLevel::BOTH;
  if (config.kind == DecayKind::GATE) {
    if (need_token) {
      if (token_gate == nullptr) throw ConfigError("token gate params missing");
      if (static_cast<int>(token_states.size()) != n) {
        throw LengthMismatch("token state count does not match graph tokens");
      }
    }
    if (need_utterance) {
      if (utterance_gate == nullptr) {
        throw ConfigError("utterance gate params missing");
      }
      if (static_cast<int>(turn_states.size()) < graph.num_turns) {
        throw LengthMismatch("turn state count does not match graph turns");
      }
    }
  }

  // Position of the current turn's first token; the leading marker token in
  // the input concatenation shifts every position equally, so the gap is
  // computed on node indices directly.
  int first_cur = n;
  for (int k = 0; k < n; ++k) {
    if (graph.turn_of_node[k] == current_turn) {
      first_cur = k;
      break;
    }
  }

  auto token_weight = [&](int k) -> Tensor {
    if (config.kind == DecayKind::SCHEDULE) {
      return Tensor::scalar(
          schedule_decay(config.schedule, first_cur - k, config.floor));
    }
    return gate_decay(tape, token_states[k], *token_gate);
  };

  std::vector<Tensor> turn_weight_cache(graph.num_turns);
  auto utterance_weight = [&](int turn) -> Tensor {
    Tensor& cached = turn_weight_cache[turn];
    if (cached.defined()) return cached;
    if (config.kind == DecayKind::SCHEDULE) {
      cached = Tensor::scalar(
          schedule_decay(config.schedule, current_turn - turn, config.floor));
    } else {
      cached = gate_decay(tape, turn_states[turn], *utterance_gate);
    }
    return cached;
  };

  std::vector<Tensor> entries;
  entries.reserve(n);
  for (int k = 0; k < n; ++k) {
    const int turn = graph.turn_of_node[k];
    if (turn >= current_turn) {
      entries.push_back(Tensor::scalar(1.0));
      continue;
    }
    switch (config.level) {
      case DecayLevel::TOKEN:
        entries.push_back(token_weight(k));
        break;
      case DecayLevel::UTTERANCE:
        entries.push_back(utterance_weight(turn));
        break;
      case DecayLevel::BOTH: {
        Tensor mixed =
            tape.add(tape.scale(token_weight(k), config.lambda),
                     tape.scale(utterance_weight(turn), 1.0 - config.lambda));
        entries.push_back(mixed);
        break;
      }
    }
  }

  DecayVector out;
  out.m_iu = entries.size() == 1 ? entries.front() : tape.concat_cols(entries);
  out.m_s = Tensor::constant({1, h}, std::vector<double>(h, 1.0));
  out.m = tape.concat_cols({out.m_iu, out.m_s});
  return out;
}

}  // namespace ctxparse
