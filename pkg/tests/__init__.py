# Tests for mechcond
