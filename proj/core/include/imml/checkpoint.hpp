#pragma once

#include <string>
#include <variant>

#include "imml/trainer.hpp"

namespace imml {

// Binary model snapshot: fixed header (magic, version, task, kind,
// architecture dims) followed by every named parameter in declaration
// order. Numbers are little-endian; values are raw 64-bit reals, so a
// round-trip is bit-exact.
void save_checkpoint(const std::string& path, const MModel& model, Task task);
void save_checkpoint(const std::string& path, const UModel& model, Task task);
void save_checkpoint(const std::string& path, const VanillaModel& model, Task task);
void save_checkpoint(const std::string& path, const MlpModel& model, Task task);

struct Checkpoint {
    Task task = Task::regression;
    ModelKind kind = ModelKind::m;
    std::variant<std::monostate, MModel, UModel, VanillaModel, MlpModel> model;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace imml
