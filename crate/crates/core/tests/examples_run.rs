//! Runs every example's body so they cannot silently rot.

macro_rules! example {
    ($name:ident, $path:literal) => {
        #[allow(dead_code)]
        #[path = $path]
        mod $name;

        #[test]
        fn $name() {
            $name::run().unwrap();
        }
    };
}

example!(sparsemax_scaling, "../examples/sparsemax_scaling.rs");
example!(tempering_schedule, "../examples/tempering_schedule.rs");
example!(mi_identity, "../examples/mi_identity.rs");
example!(hsic_regularizer, "../examples/hsic_regularizer.rs");
example!(csv_pipeline, "../examples/csv_pipeline.rs");
example!(train_synthetic, "../examples/train_synthetic.rs");
example!(compare_baselines, "../examples/compare_baselines.rs");
example!(ablation, "../examples/ablation.rs");
example!(mlp_checkpoint, "../examples/mlp_checkpoint.rs");
