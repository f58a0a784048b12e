#include "sbe/task.hpp"

#include <stdexcept>

namespace sbe {

std::string_view to_string(Task task) {
  switch (task) {
    case Task::binary: return "binary";
    case Task::multiclass: return "multiclass";
    case Task::regression: return "regression";
  }
  return "unknown";
}

Task parse_task(std::string_view name) {
  if (name == "binary") return Task::binary;
  if (name == "multiclass") return Task::multiclass;
  if (name == "regression") return Task::regression;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

}  // namespace sbe
