#include "nn/modules.h"

#include <sstream>

namespace ms {

std::string param_table(const std::vector<std::pair<std::string, std::vector<int64_t>>>& shapes) {
    std::ostringstream os;
    int64_t total = 0;
    for (auto& [name, shape] : shapes) {
        int64_t n = 1;
        os << "  " << name << " [";
        for (size_t i = 0; i < shape.size(); i++) {
            os << shape[i] << (i + 1 < shape.size() ? "," : "");
            n *= shape[i];
        }
        os << "] " << n << "\n";
        total += n;
    }
    os << "  total " << total << "\n";
    return os.str();
}

}  // namespace ms
