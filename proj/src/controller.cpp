#include "ewb/controller.hpp"

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace ewb {

using nlohmann::json;

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::Boot: return "BOOT";
    case Phase::Homing: return "HOMING";
    case Phase::WaitInstrument: return "WAIT_INSTRUMENT";
    case Phase::Sweep: return "SWEEP";
    case Phase::Centering: return "CENTERING";
    case Phase::Ready: return "READY";
    case Phase::Fault: return "FAULT";
  }
  return "?";
}

namespace {

constexpr std::size_t kMaxLine = 65536;

bool parse_int64(std::string_view tok, std::int64_t& out) {
  if (tok.empty()) return false;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

}  // namespace

std::variant<Command, ParseError> parse_command(std::string_view line) {
  if (line.size() > kMaxLine) return ParseError{kMaxLine, "line too long"};
  if (line.empty()) return ParseError{0, "empty command"};
  for (std::size_t i = 0; i < line.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(line[i]);
    if (c < 0x20 || c > 0x7e) return ParseError{i, "non-printable byte"};
  }
  std::vector<std::string_view> tokens;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ' ') {
      if (i == start) return ParseError{i, "empty token"};
      tokens.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  const std::string_view verb = tokens[0];
  auto fixed_arity = [&](Command::Verb v) -> std::variant<Command, ParseError> {
    if (tokens.size() != 1) return ParseError{verb.size() + 1, "unexpected argument"};
    Command cmd;
    cmd.verb = v;
    return cmd;
  };
  if (verb == "INIT") return fixed_arity(Command::Verb::Init);
  if (verb == "INSERTED") return fixed_arity(Command::Verb::Inserted);
  if (verb == "RESET") return fixed_arity(Command::Verb::Reset);
  if (verb == "POS?") return fixed_arity(Command::Verb::PosQuery);
  if (verb == "STATE?") return fixed_arity(Command::Verb::StateQuery);
  if (verb == "MOVE") {
    if (tokens.size() != 5) return ParseError{line.size(), "MOVE expects 4 integers"};
    Command cmd;
    cmd.verb = Command::Verb::Move;
    for (int i = 0; i < 4; ++i) {
      if (!parse_int64(tokens[i + 1], cmd.move_targets[i]))
        return ParseError{line.find(tokens[i + 1]), "not a signed integer"};
    }
    return cmd;
  }
  return ParseError{0, "unknown command"};
}

EmulatorConfig EmulatorConfig::defaults() {
  EmulatorConfig cfg;
  cfg.seed = 1;
  MotorConfig base;
  for (Axis a : kAllAxes) cfg.motors[a] = base;
  return cfg;
}

EmulatorConfig emulator_config_from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  EmulatorConfig cfg;
  cfg.seed = j.value("seed", std::uint64_t{0});
  for (Axis a : kAllAxes) {
    const json& m = j.at("motors").at(axis_name(a));
    MotorConfig mc;
    mc.full_step_deg = m.value("full_step_deg", mc.full_step_deg);
    mc.microstep_divisor = m.value("microstep_divisor", mc.microstep_divisor);
    mc.step_noise_rms_fraction = m.value("step_noise_rms_fraction", mc.step_noise_rms_fraction);
    mc.backlash_deg = m.value("backlash_deg", mc.backlash_deg);
    mc.max_speed_usteps_per_s = m.value("max_speed_usteps_per_s", mc.max_speed_usteps_per_s);
    mc.accel_usteps_per_s2 = m.value("accel_usteps_per_s2", mc.accel_usteps_per_s2);
    mc.endstop_deg = m.value("endstop_deg", mc.endstop_deg);
    mc.validate();
    cfg.motors[a] = mc;
  }
  if (j.contains("calibration") && !j.at("calibration").is_null())
    cfg.calibration = load_calibration(j.at("calibration").get<std::string>());
  return cfg;
}

std::string emulator_config_to_json(const EmulatorConfig& config,
                                    const std::string& calibration_path) {
  json j;
  j["seed"] = config.seed;
  if (!calibration_path.empty()) j["calibration"] = calibration_path;
  json motors;
  for (Axis a : kAllAxes) {
    const MotorConfig& mc = config.motor(a);
    motors[axis_name(a)] = {{"full_step_deg", mc.full_step_deg},
                            {"microstep_divisor", mc.microstep_divisor},
                            {"step_noise_rms_fraction", mc.step_noise_rms_fraction},
                            {"backlash_deg", mc.backlash_deg},
                            {"max_speed_usteps_per_s", mc.max_speed_usteps_per_s},
                            {"accel_usteps_per_s2", mc.accel_usteps_per_s2},
                            {"endstop_deg", mc.endstop_deg}};
  }
  j["motors"] = motors;
  return j.dump(2) + "\n";
}

EmulatorConfig load_emulator_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open emulator config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  // calibration paths are relative to the config file
  std::string text = ss.str();
  json j = json::parse(text);
  if (j.contains("calibration") && j.at("calibration").is_string()) {
    std::string cal = j.at("calibration").get<std::string>();
    if (!cal.empty() && cal[0] != '/') {
      auto slash = path.find_last_of('/');
      if (slash != std::string::npos) {
        j["calibration"] = path.substr(0, slash + 1) + cal;
        text = j.dump();
      }
    }
  }
  return emulator_config_from_json(text);
}

EmulatorCore::EmulatorCore(EmulatorConfig config)
    : config_(std::move(config)), rng_(config_.seed) {
  for (Axis a : kAllAxes) motors_[a] = MotorState{};
}

std::vector<std::string> EmulatorCore::handle_line(std::string_view line) {
  auto parsed = parse_command(line);
  if (std::holds_alternative<ParseError>(parsed)) {
    const auto& err = std::get<ParseError>(parsed);
    std::ostringstream os;
    os << "ERR 400 " << err.position << " " << err.reason;
    return {os.str()};
  }
  return dispatch(std::get<Command>(parsed));
}

std::vector<std::string> EmulatorCore::dispatch(const Command& cmd) {
  auto wrong_phase = [&]() -> std::vector<std::string> {
    return {std::string("ERR 409 ") + phase_name(phase_)};
  };
  switch (cmd.verb) {
    case Command::Verb::StateQuery:
      return {std::string("STATE ") + phase_name(phase_)};
    case Command::Verb::Reset:
      return {do_reset()};
    case Command::Verb::Init:
      if (phase_ != Phase::Boot && phase_ != Phase::Ready) return wrong_phase();
      return {do_init()};
    case Command::Verb::Inserted:
      if (phase_ != Phase::WaitInstrument) return wrong_phase();
      return {do_inserted()};
    case Command::Verb::PosQuery: {
      if (phase_ != Phase::WaitInstrument && phase_ != Phase::Ready) return wrong_phase();
      std::ostringstream os;
      os << "POS";
      for (Axis a : kAllAxes) os << " " << motors_.at(a).position_usteps;
      return {os.str()};
    }
    case Command::Verb::Move:
      if (phase_ != Phase::Ready) return wrong_phase();
      return do_move(cmd.move_targets);
  }
  return wrong_phase();
}

std::string EmulatorCore::do_init() {
  phase_ = Phase::Homing;
  double t_max = 0.0;
  for (Axis a : kAllAxes) {
    const MotorConfig& mc = config_.motor(a);
    motors_[a] = home_motor(motors_[a], mc);
    // re-label the axis coordinate so that 0 usteps = disc center
    std::int64_t endstop = deg_to_usteps(mc, mc.endstop_deg);
    motors_[a].position_usteps = endstop;
    motors_[a].endstop_usteps = endstop;
    // homing sweeps at most the full travel toward the stop
    t_max = std::max(t_max, travel_time_s(mc, std::llabs(endstop) * 2));
  }
  clock_s_ += t_max;
  phase_ = Phase::WaitInstrument;
  return "OK INIT";
}

std::optional<Axis> EmulatorCore::validate_targets_deg(const std::array<double, 4>& d) const {
  if (!config_.calibration) return Axis::Z;
  const InstrumentCalibration& cal = *config_.calibration;
  if (!cal.map_z.disc_in_range(d[0])) return Axis::Z;
  if (!cal.map_x.disc_in_range(d[1])) return Axis::X;
  if (!cal.map_y1.disc_in_range(d[2] - cal.coupling_y1 * d[1])) return Axis::Y1;
  if (!cal.map_y2.disc_in_range(d[3] - cal.coupling_y2 * d[1])) return Axis::Y2;
  return std::nullopt;
}

void EmulatorCore::drive_motor(Axis a, std::int64_t target_usteps) {
  MotionResult res;
  motors_[a] = command_motor(motors_[a], config_.motor(a), target_usteps, &rng_, &res);
  clock_s_ += res.travel_time_s;
}

void EmulatorCore::run_sweep() {
  const InstrumentCalibration& cal = *config_.calibration;
  for (Axis a : kAllAxes) {
    const AxisMap& map = cal.map(a);
    const MotorConfig& mc = config_.motor(a);
    const double pitch_disc = usteps_to_deg(config_.motor(Axis::X), motors_[Axis::X].position_usteps);
    const double comp = cal.coupling(a) * pitch_disc;
    for (double stop : {map.disc_max() + comp, map.disc_min() + comp, comp}) {
      std::array<double, 4> probe{};
      for (Axis b : kAllAxes)
        probe[static_cast<int>(b)] =
            usteps_to_deg(config_.motor(b), motors_[b].position_usteps);
      probe[static_cast<int>(a)] = stop;
      if (validate_targets_deg(probe)) {
        phase_ = Phase::Fault;
        return;
      }
      drive_motor(a, deg_to_usteps(mc, stop));
    }
  }
  phase_ = Phase::Centering;
  for (Axis a : kAllAxes) drive_motor(a, 0);
  phase_ = Phase::Ready;
}

std::string EmulatorCore::do_inserted() {
  if (!config_.calibration) return std::string("ERR 409 ") + phase_name(phase_);
  phase_ = Phase::Sweep;
  run_sweep();
  if (phase_ == Phase::Fault) return "ERR 500 sweep infeasible";
  return "OK INSERTED";
}

std::vector<std::string> EmulatorCore::do_move(const std::array<std::int64_t, 4>& targets) {
  std::array<double, 4> disc_deg{};
  for (int i = 0; i < 4; ++i)
    disc_deg[i] = usteps_to_deg(config_.motor(kAllAxes[i]), targets[i]);
  if (auto bad = validate_targets_deg(disc_deg))
    return {std::string("ERR 416 ") + axis_name(*bad)};
  double t_max = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Axis a = kAllAxes[i];
    MotionResult res;
    motors_[a] = command_motor(motors_[a], config_.motor(a), targets[i], &rng_, &res);
    t_max = std::max(t_max, res.travel_time_s);
  }
  clock_s_ += t_max;
  std::ostringstream done;
  done << "DONE";
  for (Axis a : kAllAxes) done << " " << motors_.at(a).position_usteps;
  return {"OK MOVE", done.str()};
}

std::string EmulatorCore::do_reset() {
  phase_ = Phase::Boot;
  for (Axis a : kAllAxes) motors_[a] = MotorState{};
  return "OK RESET";
}

DiscState EmulatorCore::true_disc_state() const {
  DiscState disc;
  if (!config_.calibration) return disc;
  const InstrumentCalibration& cal = *config_.calibration;
  auto shaft = [&](Axis a) { return ewb::shaft_deg(config_.motor(a), motors_.at(a)); };
  disc.z = std::clamp(shaft(Axis::Z), cal.map_z.disc_min(), cal.map_z.disc_max());
  disc.x = std::clamp(shaft(Axis::X), cal.map_x.disc_min(), cal.map_x.disc_max());
  // the jaw-side hard stops ride the wrist, so they bound the
  // coupling-corrected coordinate
  auto jaw = [&](Axis a, const AxisMap& m, double k) {
    double corrected = std::clamp(shaft(a) - k * disc.x, m.disc_min(), m.disc_max());
    return corrected + k * disc.x;
  };
  disc.y1 = jaw(Axis::Y1, cal.map_y1, cal.coupling_y1);
  disc.y2 = jaw(Axis::Y2, cal.map_y2, cal.coupling_y2);
  return disc;
}

TipPose EmulatorCore::true_tip_pose() const {
  if (!config_.calibration) return {};
  return forward_map(*config_.calibration, true_disc_state());
}

std::string protocol_transition_table(const EmulatorConfig& config) {
  const std::array<std::pair<const char*, std::string>, 6> commands{{
      {"INIT", "INIT"},
      {"INSERTED", "INSERTED"},
      {"MOVE", "MOVE 0 0 0 0"},
      {"POS?", "POS?"},
      {"STATE?", "STATE?"},
      {"RESET", "RESET"},
  }};
  const std::array<Phase, 7> phases{Phase::Boot,   Phase::Homing, Phase::WaitInstrument,
                                    Phase::Sweep,  Phase::Centering, Phase::Ready,
                                    Phase::Fault};
  std::ostringstream os;
  os << "# phase | command -> first-response-token -> next-phase\n";
  for (Phase p : phases) {
    for (const auto& [name, line] : commands) {
      EmulatorCore core(config);
      if (p == Phase::Ready || p == Phase::WaitInstrument) {
        core.handle_line("INIT");
        if (p == Phase::Ready) core.handle_line("INSERTED");
      } else {
        core.force_phase(p);
      }
      auto responses = core.handle_line(line);
      const std::string& first = responses.front();
      std::size_t cut = first.find(' ');
      if (cut != std::string::npos && first.compare(0, 3, "ERR") == 0)
        cut = first.find(' ', cut + 1);  // keep the error code
      std::string head = first.substr(0, cut);
      os << phase_name(p) << " | " << name << " -> " << head << " -> "
         << phase_name(core.phase()) << "\n";
    }
  }
  return os.str();
}

void serve_stream(EmulatorCore& core, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    for (const auto& response : core.handle_line(line)) out << response << "\n";
    out.flush();
  }
}

int open_server_socket(const std::string& address, int& port_out) {
  auto colon = address.find_last_of(':');
  int port = colon == std::string::npos ? 0 : std::atoi(address.c_str() + colon + 1);
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw std::runtime_error("socket() failed");
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    throw std::runtime_error("bind() failed for " + address);
  }
  if (::listen(fd, 1) != 0) {
    ::close(fd);
    throw std::runtime_error("listen() failed");
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  port_out = ntohs(addr.sin_port);
  return fd;
}

void serve_connection(EmulatorCore& core, int fd) {
  std::string buffer;
  char chunk[4096];
  for (;;) {
    ssize_t n = ::read(fd, chunk, sizeof(chunk));
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t pos;
    while ((pos = buffer.find('\n')) != std::string::npos) {
      std::string line = buffer.substr(0, pos);
      buffer.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::string out;
      for (const auto& response : core.handle_line(line)) out += response + "\n";
      std::size_t written = 0;
      while (written < out.size()) {
        ssize_t w = ::write(fd, out.data() + written, out.size() - written);
        if (w <= 0) return;
        written += static_cast<std::size_t>(w);
      }
    }
    if (buffer.size() > kMaxLine) buffer.clear();  // drop oversized garbage
  }
}

void serve_forever(EmulatorCore& core, int listen_fd) {
  for (;;) {
    int fd = ::accept(listen_fd, nullptr, nullptr);
    if (fd < 0) continue;
    serve_connection(core, fd);
    ::close(fd);
  }
}

}  // namespace ewb
