#include "fourwisd/domain.hpp"

#include <stdexcept>

#include <json.hpp>

namespace fourwisd {

const char* name(WheelId w) {
  switch (w) {
    case WheelId::FL: return "FL";
    case WheelId::FR: return "FR";
    case WheelId::RL: return "RL";
    case WheelId::RR: return "RR";
  }
  return "??";
}

VehicleParams default_params() {
  VehicleParams p;
  p.m = 1685.2;
  p.I_z = 2315.3;
  p.I_w = 1.5;
  p.t_w = 1.795;
  p.l_f = 1.110;
  p.l_r = 1.756;
  p.C_f = 46235.0;
  p.C_r = 31442.0;
  p.R_r = 0.325;
  p.R_e = 0.334;
  p.dt = 0.01;
  p.g = 9.81;
  return p;
}

double yaw_lever_long(const VehicleParams& p, WheelId w, double delta) {
  const Vec2 pos = p.wheel_position(w);
  return pos[0] * std::sin(delta) - pos[1] * std::cos(delta);
}

double yaw_lever_lat(const VehicleParams& p, WheelId w, double delta) {
  const Vec2 pos = p.wheel_position(w);
  return pos[0] * std::cos(delta) + pos[1] * std::sin(delta);
}

std::string to_json_string(const VehicleParams& p) {
  nlohmann::json j{{"m", p.m},     {"I_z", p.I_z}, {"I_w", p.I_w},
                   {"t_w", p.t_w}, {"l_f", p.l_f}, {"l_r", p.l_r},
                   {"C_f", p.C_f}, {"C_r", p.C_r}, {"R_r", p.R_r},
                   {"R_e", p.R_e}, {"dt", p.dt},   {"g", p.g}};
  return j.dump();
}

VehicleParams params_from_json_string(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  VehicleParams p;
  p.m = j.at("m").get<double>();
  p.I_z = j.at("I_z").get<double>();
  p.I_w = j.at("I_w").get<double>();
  p.t_w = j.at("t_w").get<double>();
  p.l_f = j.at("l_f").get<double>();
  p.l_r = j.at("l_r").get<double>();
  p.C_f = j.at("C_f").get<double>();
  p.C_r = j.at("C_r").get<double>();
  p.R_r = j.at("R_r").get<double>();
  p.R_e = j.at("R_e").get<double>();
  p.dt = j.at("dt").get<double>();
  p.g = j.at("g").get<double>();
  return p;
}

}  // namespace fourwisd
