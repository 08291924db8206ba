#include "phaforce/task.hpp"

#include <algorithm>

namespace phaforce {

namespace {

PhaseSet make(TaskKind kind, std::vector<std::string> names) {
    PhaseSet p;
    p.kind = kind;
    p.names = std::move(names);
    for (const auto& n : p.names) p.masks.push_back(phase_mask(n));
    return p;
}

}  // namespace

std::size_t PhaseSet::index(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw std::out_of_range("no phase named " + name);
    return static_cast<std::size_t>(it - names.begin());
}

Mask phase_mask(const std::string& name) {
    if (name == "search") return {1, 1, 0, 0, 0, 1};
    if (name == "insert") return {0, 0, 1, 0, 0, 1};
    if (name == "unlock") return {1, 1, 0, 0, 0, 0};
    if (name == "pull") return {1, 1, 0, 1, 1, 0};
    if (name == "wiping") return {0, 0, 1, 0, 0, 0};
    // approach, pick, recovery and done are left to the planner
    return {0, 0, 0, 0, 0, 0};
}

PhaseSet plug_in_phases() { return make(TaskKind::PlugIn, {"approach", "search", "recovery", "insert", "done"}); }
PhaseSet wiping_phases() { return make(TaskKind::Wiping, {"pick", "approach", "wiping", "done"}); }
PhaseSet drawer_phases() { return make(TaskKind::Drawer, {"pick", "unlock", "pull", "done"}); }

const std::vector<std::string>& known_task_ids() {
    static const std::vector<std::string> ids{"charger", "usb", "wiping"};
    return ids;
}

TaskSpec task_by_id(const std::string& id) {
    if (id == "charger" || id == "usb") return {id, plug_in_phases()};
    if (id == "wiping") return {id, wiping_phases()};
    throw UnknownTask("unknown task id '" + id + "' (expected charger, usb or wiping)");
}

PhaseSchedule PhaseSchedule::uniform(std::size_t k, double pc) {
    return {pc, std::vector<double>(k, 1.0 / static_cast<double>(k))};
}

PhaseSchedule PhaseSchedule::one_hot(std::size_t k, std::size_t phase, double pc) {
    PhaseSchedule s{pc, std::vector<double>(k, 0.0)};
    s.belief.at(phase) = 1.0;
    return s;
}

}  // namespace phaforce
