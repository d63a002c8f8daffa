#pragma once

namespace l3dg::nc {

    /// Worker count for internal parallel loops; n <= 0 keeps the runtime default.
    void set_num_threads(int n);
    int num_threads();

} // namespace l3dg::nc
