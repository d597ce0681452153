#pragma once

#include <httplib.h>

// <resolv.h> (pulled in by httplib) defines `_res` as a macro, which breaks
// any later header that uses the name for a parameter (Eigen does).
#ifdef _res
#undef _res
#endif
