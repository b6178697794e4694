//! Every example runs to completion.

mod wells {
    include!("../examples/wells.rs");

    #[test]
    fn runs() {
        let _ = run_example();
    }
}

mod energy {
    include!("../examples/energy.rs");

    #[test]
    fn runs() {
        let _ = run_example();
    }
}

mod minimize {
    include!("../examples/minimize.rs");

    #[test]
    fn runs() {
        let _ = run_example();
    }
}

mod laminate {
    include!("../examples/laminate.rs");

    #[test]
    fn runs() {
        let _ = run_example();
    }
}

mod layer_energy {
    include!("../examples/layer_energy.rs");

    #[test]
    fn runs() {
        let _ = run_example();
    }
}

mod spin {
    include!("../examples/spin.rs");

    #[test]
    fn runs() {
        let _ = run_example();
    }
}

mod coarea {
    include!("../examples/coarea.rs");

    #[test]
    fn runs() {
        let _ = run_example();
    }
}

mod rigidity {
    include!("../examples/rigidity.rs");

    #[test]
    fn runs() {
        let _ = run_example();
    }
}

mod grid_perturbation {
    include!("../examples/grid_perturbation.rs");

    #[test]
    fn runs() {
        let _ = run_example();
    }
}

mod deformation_io {
    include!("../examples/deformation_io.rs");

    #[test]
    fn runs() {
        let _ = run_example();
    }
}

mod inequalities {
    include!("../examples/inequalities.rs");

    #[test]
    fn runs() {
        let _ = run_example();
    }
}

mod cli {
    include!("../examples/cli.rs");

    #[test]
    fn runs() {
        let _ = run_example();
    }
}
