#include "mixhom/errors.hpp"

namespace mixhom {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const config_error*>(&e)) return 1;
  if (dynamic_cast<const parse_error*>(&e)) return 2;
  if (dynamic_cast<const domain_error*>(&e)) return 3;
  if (dynamic_cast<const numerical_error*>(&e)) return 4;
  return 4;
}

}  // namespace mixhom
