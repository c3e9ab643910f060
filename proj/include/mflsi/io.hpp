#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mflsi/dynamics.hpp"
#include "mflsi/error.hpp"

#ifndef MFLSI_VERSION
#define MFLSI_VERSION "0.1.0"
#endif

namespace mflsi {

inline constexpr const char* kVersion = MFLSI_VERSION;

/// Writes `content` to a sibling temporary file, then renames it over `path`.
inline void write_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), ErrorKind::Config, "cannot write " + tmp.string());
        out << content;
        out.flush();
        require(out.good(), ErrorKind::Config, "write failed for " + tmp.string());
    }
    fs::rename(tmp, target);
}

/// Inverse of write_trajectory_csv. Rows must be grouped by replica and step.
inline Trajectory read_trajectory_csv(std::istream& is) {
    std::string line;
    require(static_cast<bool>(std::getline(is, line)), ErrorKind::Config, "trajectory file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    require(line == "replica,step,time,observable,value", ErrorKind::Config, "unexpected trajectory header: " + line);

    struct Row {
        std::uint32_t replica;
        std::int64_t step;
        double time;
        std::string observable;
        double value;
    };
    std::vector<Row> rows;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string f[5];
        for (auto& field : f) std::getline(ss, field, ',');
        try {
            rows.push_back({static_cast<std::uint32_t>(std::stoul(f[0])), std::stoll(f[1]), std::stod(f[2]), f[3],
                            std::stod(f[4])});
        } catch (const std::exception&) {
            throw Error(ErrorKind::Config, "malformed trajectory row: " + line);
        }
    }
    require(!rows.empty(), ErrorKind::Config, "trajectory has no records");

    Trajectory traj;
    std::map<std::string, std::size_t> obs_index;
    for (const auto& r : rows)
        if (obs_index.emplace(r.observable, traj.observables.size()).second) traj.observables.push_back(r.observable);
    const std::size_t n_obs = traj.observables.size();

    std::map<std::uint32_t, std::map<std::int64_t, std::vector<double>>> grouped;
    for (const auto& r : rows) {
        auto& rec = grouped[r.replica][r.step];
        if (rec.empty()) rec.assign(n_obs, std::numeric_limits<double>::quiet_NaN());
        rec[obs_index[r.observable]] = r.value;
        if (r.step > 0 && traj.step == 0.0) traj.step = r.time / static_cast<double>(r.step);
    }
    require(traj.step > 0.0, ErrorKind::Config, "trajectory needs at least one record with step > 0");
    std::size_t records = 0;
    for (const auto& [rep, steps] : grouped) {
        ReplicaTrace t;
        t.replica = rep;
        t.values.resize(static_cast<Eigen::Index>(steps.size()), static_cast<Eigen::Index>(n_obs));
        Eigen::Index row = 0;
        for (const auto& [step, vals] : steps) {
            t.steps.push_back(step);
            for (std::size_t k = 0; k < n_obs; ++k) {
                require(std::isfinite(vals[k]), ErrorKind::Config, "trajectory record is missing an observable");
                t.values(row, static_cast<Eigen::Index>(k)) = vals[k];
            }
            ++row;
        }
        if (records == 0) records = steps.size();
        require(records == steps.size(), ErrorKind::Config, "replicas have different record counts");
        traj.replicas.push_back(std::move(t));
    }
    return traj;
}

inline Trajectory load_trajectory_csv(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::Config, "cannot open trajectory " + path);
    return read_trajectory_csv(in);
}

} // namespace mflsi
