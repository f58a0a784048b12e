#pragma once

#include <string>
#include <string_view>

namespace sbe {

enum class Task { binary, multiclass, regression };

std::string_view to_string(Task task);
Task parse_task(std::string_view name);

inline bool is_classification(Task task) { return task != Task::regression; }

}  // namespace sbe
