// Every example must keep running against the current API.

macro_rules! example {
    ($name:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!("../examples/", stringify!($name), ".rs"));
        }

        #[test]
        fn $name() {
            $name::run().unwrap();
        }
    };
}

example!(lattice_geometry);
example!(commuting_logs);
example!(trivialize_factor);
example!(series_algebra);
example!(small_divisors);
example!(cohomological_equation);
example!(newton_step);
example!(linearize_arnold);
example!(linearize_torus2);
example!(planted_resonance);
example!(run_from_config);
