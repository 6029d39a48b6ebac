#include "condet/types.hpp"

namespace condet {

const std::vector<Category>& canonical_categories() {
  static const std::vector<Category> table = {
      {1, "pedestrian"}, {2, "cyclist"}, {3, "car"},
      {4, "truck"},      {5, "tram"},    {6, "tricycle"},
  };
  return table;
}

const std::vector<TaskSpec>& canonical_tasks() {
  static const std::vector<TaskSpec> table = {
      {1, "daytime", "city-street", "clear"},
      {2, "daytime", "highway", "clear/overcast"},
      {3, "night", "", ""},
      {4, "daytime", "", "rain"},
  };
  return table;
}

}  // namespace condet
