"""Reference solutions: special functions, closed-form series and a finite-difference solver."""
