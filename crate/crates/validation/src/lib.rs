//! Hosts the `acceptance` test target. It lives in its own package, which
//! sorts after the others, so a red criterion never hides their results.
