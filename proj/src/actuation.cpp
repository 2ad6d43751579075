#include "ewb/actuation.hpp"

#include <cmath>

namespace ewb {

void MotorConfig::validate() const {
  if (!(full_step_deg > 0)) throw std::invalid_argument("full_step_deg must be positive");
  int d = microstep_divisor;
  if (d < 1 || d > 256 || (d & (d - 1)) != 0)
    throw std::invalid_argument("microstep_divisor must be a power of two in [1, 256]");
  if (backlash_deg < 0) throw std::invalid_argument("backlash_deg must be >= 0");
  if (step_noise_rms_fraction < 0) throw std::invalid_argument("noise fraction must be >= 0");
  if (!(max_speed_usteps_per_s > 0) || !(accel_usteps_per_s2 > 0))
    throw std::invalid_argument("speed and acceleration must be positive");
}

std::int64_t deg_to_usteps(const MotorConfig& config, double angle_deg) {
  if (!std::isfinite(angle_deg)) throw std::invalid_argument("angle must be finite");
  return std::llround(angle_deg * config.microstep_divisor / config.full_step_deg);
}

double usteps_to_deg(const MotorConfig& config, std::int64_t usteps) {
  return static_cast<double>(usteps) * config.full_step_deg / config.microstep_divisor;
}

double travel_time_s(const MotorConfig& config, std::int64_t distance_usteps) {
  const double n = static_cast<double>(std::llabs(distance_usteps));
  if (n == 0.0) return 0.0;
  const double v = config.max_speed_usteps_per_s;
  const double a = config.accel_usteps_per_s2;
  if (n >= v * v / a) return n / v + v / a;  // trapezoid: two ramps + cruise
  return 2.0 * std::sqrt(n / a);             // triangular
}

double shaft_deg(const MotorConfig& config, const MotorState& state) {
  return usteps_to_deg(config, state.position_usteps) + state.backlash_slack_deg +
         state.last_noise_deg;
}

namespace {

double slack_after_move(double slack, double backlash, double delta_deg) {
  if (delta_deg > 0) return std::max(0.0, slack - delta_deg);
  if (delta_deg < 0) return std::min(backlash, slack - delta_deg);
  return slack;
}

}  // namespace

MotorState command_motor(const MotorState& state, const MotorConfig& config,
                         std::int64_t target_usteps, Rng* rng, MotionResult* result) {
  if (!state.homed) throw NotHomedError();
  MotorState next = state;
  const std::int64_t delta = target_usteps - state.position_usteps;
  const double delta_deg = usteps_to_deg(config, delta);
  next.position_usteps = target_usteps;
  if (delta != 0) {
    next.last_direction = delta > 0 ? Direction::CW : Direction::CCW;
    next.backlash_slack_deg = slack_after_move(state.backlash_slack_deg, config.backlash_deg, delta_deg);
    next.last_noise_deg =
        rng ? rng->normal(0.0, config.step_noise_rms_fraction * config.microstep_deg()) : 0.0;
  }
  if (result) {
    result->travel_time_s = travel_time_s(config, delta);
    result->effective_shaft_deg = shaft_deg(config, next);
  }
  return next;
}

double apply_backlash(const MotorState& state, const MotorConfig& config, double commanded_deg) {
  const double current_deg = usteps_to_deg(config, state.position_usteps);
  const double slack =
      slack_after_move(state.backlash_slack_deg, config.backlash_deg, commanded_deg - current_deg);
  return commanded_deg + slack;
}

MotorState home_motor(const MotorState&, const MotorConfig& config) {
  MotorState next;
  next.position_usteps = 0;
  next.endstop_usteps = 0;
  next.homed = true;
  next.last_direction = Direction::CCW;
  next.backlash_slack_deg = config.backlash_deg;  // lash taken in the homing direction
  next.last_noise_deg = 0.0;
  return next;
}

}  // namespace ewb
