#pragma once

#include <string>
#include <vector>

#include "sbe/dataset.hpp"

namespace test {

inline sbe::Column numeric(std::string name, std::vector<double> v) {
  return {{std::move(name), sbe::ColumnKind::numeric}, std::move(v), {}};
}

inline sbe::Column categorical(std::string name, std::vector<std::string> v) {
  return {{std::move(name), sbe::ColumnKind::categorical}, {}, std::move(v)};
}

inline sbe::Column target(std::vector<double> v, std::string name = "y") {
  return {{std::move(name), sbe::ColumnKind::target}, std::move(v), {}};
}

inline sbe::Dataset one_column(sbe::Task task, std::vector<std::string> cats, std::vector<double> y) {
  return sbe::Dataset(task, {categorical("c", std::move(cats)), target(std::move(y))});
}

}  // namespace test
