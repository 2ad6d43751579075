#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>

#include "ewb/geometry.hpp"

namespace ewb {

struct MotorConfig {
  double full_step_deg = 1.8;
  int microstep_divisor = 16;  // power of two, up to 256
  double step_noise_rms_fraction = 0.0245;  // of one microstep
  double backlash_deg = 0.0;
  double max_speed_usteps_per_s = 4000.0;
  double accel_usteps_per_s2 = 8000.0;
  double endstop_deg = 0.0;  // end-stop trigger relative to the home reference

  double microstep_deg() const { return full_step_deg / microstep_divisor; }
  void validate() const;  // throws std::invalid_argument
};

enum class Direction { None, CW, CCW };

/// Value-type motor state; all transitions are pure functions.
struct MotorState {
  std::int64_t position_usteps = 0;
  Direction last_direction = Direction::None;
  // pending lash, deg in [0, backlash_deg]; 0 means the slack is fully
  // taken in the CW (increasing) direction, so CW approaches transmit
  // exactly
  double backlash_slack_deg = 0.0;
  double last_noise_deg = 0.0;
  std::int64_t endstop_usteps = 0;
  bool homed = false;

  bool at_endstop() const { return homed && position_usteps == endstop_usteps; }
};

struct MotionResult {
  double effective_shaft_deg = 0.0;
  double travel_time_s = 0.0;
};

struct NotHomedError : std::runtime_error {
  NotHomedError() : std::runtime_error("motor not homed") {}
};

/// Round to the nearest microstep count; exact halves round away from zero.
std::int64_t deg_to_usteps(const MotorConfig& config, double angle_deg);

double usteps_to_deg(const MotorConfig& config, std::int64_t usteps);

/// Trapezoidal (or triangular, when too short to reach max speed) travel
/// time for a move of `distance_usteps`.
double travel_time_s(const MotorConfig& config, std::int64_t distance_usteps);

/// Shaft angle implied by a motor state: quantized position plus pending
/// lash plus the wobble of the last move.
double shaft_deg(const MotorConfig& config, const MotorState& state);

/// Drive the motor to an absolute microstep target. The play element keeps
/// the shaft within [position, position + backlash] deg: moving CW
/// transmits once the pending lash is used up, a CCW reversal first
/// re-opens it. Noise (RMS = step_noise_rms_fraction microsteps) is applied
/// to the shaft angle when `rng` is given and the motor actually moves.
MotorState command_motor(const MotorState& state, const MotorConfig& config,
                         std::int64_t target_usteps, Rng* rng, MotionResult* result);

/// Shaft angle that a commanded motor angle produces through the play
/// element, without quantization or noise. Pure helper over the same
/// hysteron.
double apply_backlash(const MotorState& state, const MotorConfig& config, double commanded_deg);

/// Home against the end stop: position 0 at the trigger, slack fully taken
/// in the (CCW) homing direction, independent of prior state.
MotorState home_motor(const MotorState& state, const MotorConfig& config);

}  // namespace ewb
