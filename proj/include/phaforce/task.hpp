#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace phaforce {

using Mask = std::array<double, 6>;

enum class TaskKind { PlugIn, Wiping, Drawer };

/// Task-defined phase set with one corrective-subspace mask per phase.
struct PhaseSet {
    TaskKind kind = TaskKind::PlugIn;
    std::vector<std::string> names;
    std::vector<Mask> masks;

    std::size_t size() const { return names.size(); }
    /// Index of a named phase; throws std::out_of_range if absent.
    std::size_t index(const std::string& name) const;
};

PhaseSet plug_in_phases();
PhaseSet wiping_phases();
PhaseSet drawer_phases();

/// Mask for a phase name ([x, y, z, roll, pitch, yaw]); zero for phases
/// without a corrective subspace.
Mask phase_mask(const std::string& name);

struct UnknownTask : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Task ids accepted on the command line: charger, usb (plug-in variants), wiping.
struct TaskSpec {
    std::string id;
    PhaseSet phases;
    bool is_wiping() const { return phases.kind == TaskKind::Wiping; }
};

TaskSpec task_by_id(const std::string& id);
const std::vector<std::string>& known_task_ids();

/// Contact probability and phase belief.
struct PhaseSchedule {
    double contact_prob = 0.0;
    std::vector<double> belief;

    static PhaseSchedule uniform(std::size_t k, double pc);
    static PhaseSchedule one_hot(std::size_t k, std::size_t phase, double pc);
};

}  // namespace phaforce
