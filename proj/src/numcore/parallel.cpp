#include "l3dg/numcore/parallel.hpp"

#include <omp.h>

namespace l3dg::nc {

    void set_num_threads(int n) {
        if (n > 0)
            omp_set_num_threads(n);
    }

    int num_threads() { return omp_get_max_threads(); }

} // namespace l3dg::nc
