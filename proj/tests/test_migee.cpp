#include "doctest.h"

TEST_SUITE("migee") {}
