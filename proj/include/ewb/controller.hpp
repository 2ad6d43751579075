#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ewb/actuation.hpp"
#include "ewb/instrument.hpp"

namespace ewb {

enum class Phase { Boot, Homing, WaitInstrument, Sweep, Centering, Ready, Fault };
const char* phase_name(Phase p);

struct Command {
  enum class Verb { Init, Inserted, Move, PosQuery, StateQuery, Reset };
  Verb verb = Verb::StateQuery;
  std::array<std::int64_t, 4> move_targets{};  // z x y1 y2, absolute microsteps
};

struct ParseError {
  std::size_t position = 0;
  std::string reason;
};

/// Total over arbitrary bytes: ASCII, single-space-separated, case-sensitive
/// keywords; MOVE takes exactly four signed integers.
std::variant<Command, ParseError> parse_command(std::string_view line);

struct EmulatorConfig {
  std::uint64_t seed = 0;
  std::map<Axis, MotorConfig> motors;
  std::optional<InstrumentCalibration> calibration;

  static EmulatorConfig defaults();  // fixture motors, no calibration
  const MotorConfig& motor(Axis a) const { return motors.at(a); }
};

EmulatorConfig emulator_config_from_json(const std::string& json_text);
std::string emulator_config_to_json(const EmulatorConfig& config,
                                    const std::string& calibration_path);
EmulatorConfig load_emulator_config(const std::string& path);

/// Firmware twin. Commands run synchronously against a virtual clock, so a
/// session observes only BOOT / WAIT_INSTRUMENT / READY / FAULT; the
/// transient phases exist in the transition table and during execution.
class EmulatorCore {
 public:
  explicit EmulatorCore(EmulatorConfig config);

  /// One inbound line (no trailing newline) -> response lines in order.
  /// Exactly one immediate response; MOVE adds one deferred DONE.
  std::vector<std::string> handle_line(std::string_view line);

  Phase phase() const { return phase_; }
  double virtual_time_s() const { return clock_s_; }
  const MotorState& motor(Axis a) const { return motors_.at(a); }
  const EmulatorConfig& config() const { return config_; }

  /// Physical side channel for the metrology twin: shaft angles through
  /// the play element, noise, and the disc hard stops.
  DiscState true_disc_state() const;
  TipPose true_tip_pose() const;

  /// Test/table hook; relabels the phase without running any action.
  void force_phase(Phase p) { phase_ = p; }

 private:
  std::vector<std::string> dispatch(const Command& cmd);
  std::string do_init();
  std::string do_inserted();
  std::vector<std::string> do_move(const std::array<std::int64_t, 4>& targets);
  std::string do_reset();
  std::optional<Axis> validate_targets_deg(const std::array<double, 4>& disc_deg) const;
  void drive_motor(Axis a, std::int64_t target_usteps);
  void run_sweep();

  EmulatorConfig config_;
  Phase phase_ = Phase::Boot;
  std::map<Axis, MotorState> motors_;
  double clock_s_ = 0.0;
  Rng rng_;
};

/// Formatted exhaustive (phase x command) transition table; one line per
/// phase, used by the conformance test against the committed table.
std::string protocol_transition_table(const EmulatorConfig& config);

/// Newline-delimited session loop over iostreams (stdio mode and tests).
void serve_stream(EmulatorCore& core, std::istream& in, std::ostream& out);

/// Stream-socket transport. open_server_socket returns a listening fd and
/// reports the bound port (address "host:port"; port 0 picks one).
int open_server_socket(const std::string& address, int& port_out);
void serve_connection(EmulatorCore& core, int fd);
[[noreturn]] void serve_forever(EmulatorCore& core, int listen_fd);

}  // namespace ewb
