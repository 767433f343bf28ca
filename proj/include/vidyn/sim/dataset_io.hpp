#pragma once

#include <filesystem>
#include <fstream>
#include <optional>

#include "json.hpp"

#include "vidyn/core/csv.hpp"
#include "vidyn/core/types.hpp"

namespace vidyn {

struct Dataset {
  SensorLog log;
  std::optional<std::vector<GroundTruthSample>> truth;
};

inline void export_dataset(const SensorLog& log,
                           const std::vector<GroundTruthSample>* truth,
                           const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  std::vector<std::vector<double>> rows;
  for (const auto& m : log.imu)
    rows.push_back({m.t, m.w.x(), m.w.y(), m.w.z(), m.a.x(), m.a.y(), m.a.z()});
  write_csv(dir + "/imu.csv", {"t", "wx", "wy", "wz", "ax", "ay", "az"}, rows);

  rows.clear();
  for (const auto& m : log.thrust) rows.push_back({m.t, m.T});
  write_csv(dir + "/thrust.csv", {"t", "T"}, rows);

  rows.clear();
  for (const auto& f : log.features)
    rows.push_back({f.t, double(f.frame_id), double(f.landmark_id), f.px.x(), f.px.y()});
  write_csv(dir + "/features.csv", {"t", "frame_id", "landmark_id", "u", "v"}, rows);

  rows.clear();
  for (const auto& [id, p] : log.landmarks) rows.push_back({double(id), p.x(), p.y(), p.z()});
  write_csv(dir + "/landmarks.csv", {"id", "x", "y", "z"}, rows);

  if (truth) {
    rows.clear();
    for (const auto& g : *truth)
      rows.push_back({g.t, g.p.x(), g.p.y(), g.p.z(), g.q.w(), g.q.x(), g.q.y(), g.q.z(),
                      g.v.x(), g.v.y(), g.v.z(), g.f_e_true.x(), g.f_e_true.y(),
                      g.f_e_true.z()});
    write_csv(dir + "/gt.csv",
              {"t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "fex", "fey",
               "fez"},
              rows);
  }

  nlohmann::json calib;
  calib["intrinsics"] = {{"fx", log.rig.cam.fx}, {"fy", log.rig.cam.fy},
                         {"cx", log.rig.cam.cx}, {"cy", log.rig.cam.cy},
                         {"width", log.rig.cam.width}, {"height", log.rig.cam.height}};
  calib["body_to_camera"] = {
      {"q", {log.rig.q_bc.w(), log.rig.q_bc.x(), log.rig.q_bc.y(), log.rig.q_bc.z()}},
      {"p", {log.rig.p_bc.x(), log.rig.p_bc.y(), log.rig.p_bc.z()}}};
  calib["rates"] = {{"imu", log.rig.imu_rate}, {"thrust", log.rig.thrust_rate},
                    {"cam", log.rig.cam_rate}};
  std::ofstream(dir + "/calib.json") << calib.dump(2) << "\n";
}

namespace detail {
inline void check_sorted(const std::vector<double>& ts, const std::string& what) {
  for (size_t i = 1; i < ts.size(); ++i)
    if (ts[i] < ts[i - 1]) throw CsvError("unsorted timestamps in " + what);
}
}  // namespace detail

inline Dataset import_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  Dataset ds;

  {
    auto t = read_csv(dir + "/imu.csv");
    const int ct = t.column("t"), cwx = t.column("wx"), cwy = t.column("wy"),
              cwz = t.column("wz"), cax = t.column("ax"), cay = t.column("ay"),
              caz = t.column("az");
    std::vector<double> ts;
    for (const auto& r : t.rows) {
      ds.log.imu.push_back({r[ct], {r[cwx], r[cwy], r[cwz]}, {r[cax], r[cay], r[caz]}});
      ts.push_back(r[ct]);
    }
    detail::check_sorted(ts, "imu.csv");
  }
  {
    auto t = read_csv(dir + "/thrust.csv");
    const int ct = t.column("t"), cT = t.column("T");
    std::vector<double> ts;
    for (const auto& r : t.rows) {
      ds.log.thrust.push_back({r[ct], r[cT]});
      ts.push_back(r[ct]);
    }
    detail::check_sorted(ts, "thrust.csv");
  }
  {
    auto t = read_csv(dir + "/landmarks.csv");
    const int cid = t.column("id"), cx = t.column("x"), cy = t.column("y"), cz = t.column("z");
    for (const auto& r : t.rows)
      ds.log.landmarks[static_cast<int>(r[cid])] = Vec3(r[cx], r[cy], r[cz]);
  }
  {
    auto t = read_csv(dir + "/features.csv");
    const int ct = t.column("t"), cf = t.column("frame_id"), cl = t.column("landmark_id"),
              cu = t.column("u"), cv = t.column("v");
    std::vector<double> ts;
    for (const auto& r : t.rows) {
      FeatureObs f{r[ct], static_cast<int>(r[cf]), static_cast<int>(r[cl]), {r[cu], r[cv]}};
      if (!ds.log.landmarks.count(f.landmark_id))
        throw CsvError("feature references unknown landmark " + std::to_string(f.landmark_id));
      ds.log.features.push_back(f);
      ts.push_back(f.t);
    }
    detail::check_sorted(ts, "features.csv");
  }
  {
    std::ifstream in(dir + "/calib.json");
    if (!in) throw CsvError("cannot open " + dir + "/calib.json");
    nlohmann::json calib = nlohmann::json::parse(in);
    auto& i = calib.at("intrinsics");
    ds.log.rig.cam.fx = i.at("fx");
    ds.log.rig.cam.fy = i.at("fy");
    ds.log.rig.cam.cx = i.at("cx");
    ds.log.rig.cam.cy = i.at("cy");
    ds.log.rig.cam.width = i.at("width");
    ds.log.rig.cam.height = i.at("height");
    auto& e = calib.at("body_to_camera");
    ds.log.rig.q_bc = Quat(e.at("q")[0], e.at("q")[1], e.at("q")[2], e.at("q")[3]);
    ds.log.rig.p_bc = Vec3(e.at("p")[0], e.at("p")[1], e.at("p")[2]);
    ds.log.rig.imu_rate = calib.at("rates").at("imu");
    ds.log.rig.thrust_rate = calib.at("rates").at("thrust");
    ds.log.rig.cam_rate = calib.at("rates").at("cam");
  }
  if (fs::exists(dir + "/gt.csv")) {
    auto t = read_csv(dir + "/gt.csv");
    const int ct = t.column("t"), cpx = t.column("px"), cpy = t.column("py"),
              cpz = t.column("pz"), cqw = t.column("qw"), cqx = t.column("qx"),
              cqy = t.column("qy"), cqz = t.column("qz"), cvx = t.column("vx"),
              cvy = t.column("vy"), cvz = t.column("vz"), cfx = t.column("fex"),
              cfy = t.column("fey"), cfz = t.column("fez");
    std::vector<GroundTruthSample> truth;
    std::vector<double> ts;
    for (const auto& r : t.rows) {
      GroundTruthSample g;
      g.t = r[ct];
      g.p = {r[cpx], r[cpy], r[cpz]};
      g.q = Quat(r[cqw], r[cqx], r[cqy], r[cqz]);
      g.v = {r[cvx], r[cvy], r[cvz]};
      g.f_e_true = {r[cfx], r[cfy], r[cfz]};
      truth.push_back(g);
      ts.push_back(g.t);
    }
    detail::check_sorted(ts, "gt.csv");
    ds.truth = std::move(truth);
  }
  return ds;
}

}  // namespace vidyn
