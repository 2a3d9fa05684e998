//! Global assembly on the refined plate, rayon pool against a plain loop.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gedamage::damage::ReturnMapOptions;
use gedamage::fem::kernel::KappaMode;
use gedamage::fem::{Assembler, Execution, DOFS_PER_NODE};
use gedamage::studies::{MeshStudyConfig, PlateMesh};

fn assembly(c: &mut Criterion) {
    let study = MeshStudyConfig::default();
    let problem = study.problem(PlateMesh::Refined).expect("plate mesh");
    let mut x = vec![0.0; problem.num_dofs()];
    for (n, p) in problem.mesh.nodes.iter().enumerate() {
        x[DOFS_PER_NODE * n] = 0.02 * p[0];
        x[DOFS_PER_NODE * n + 1] = -0.006 * p[1];
    }
    let kappa = vec![[0.0; 8]; problem.mesh.num_elements()];
    let mode = KappaMode::Resolve(ReturnMapOptions::default());

    let mut group = c.benchmark_group("assembly");
    group.sample_size(10);
    for (name, exec) in [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)] {
        let mut asm = Assembler::new(&problem, exec);
        for tangent in [false, true] {
            let id = BenchmarkId::new(name, if tangent { "tangent" } else { "residual" });
            group.bench_function(id, |b| {
                b.iter(|| asm.assemble(&problem, &problem.model, &x, &kappa, &kappa, mode, tangent).expect("assembly"))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, assembly);
criterion_main!(benches);
