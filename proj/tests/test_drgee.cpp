#include "doctest.h"

TEST_SUITE("drgee") {}
