use std::collections::BTreeMap;

use anyhow::Result;
use serde_json::{json, Value};

use kingman_core::branching::{total_progeny_pmf, total_progeny_tail};
use kingman_core::bridges::sample_stationary_erosion_via_flow;
use kingman_core::diffusions::{build_hierarchy, frequencies_from_hierarchy, kernel_transform};
use kingman_core::erosion::{
    generator_residual, sample_stationary, stationary_pmf_small_n, ErosionParams, ORACLE_MAX_N,
};
use kingman_core::immigration::{
    block_count_stationary_pmf, rescaled_block_count_check, simulate_ancestral_with,
    simulate_block_count, AncestralOptions, BlockCountLaw,
};
use kingman_core::stats::{
    chi_square_gof, chi_square_two_sample, experiment_rng, ks_two_sample, mean_stderr,
    pearson_correlation, replicates, tv_distance, wasserstein1, EmpiricalPmf, DEFAULT_MIN_CELL,
};
use kingman_core::{empirical_frequencies, Partition};

use crate::config::{Experiment, ExperimentConfig};
use crate::report::{Table, TestRecord};

/// Checks against large-n limits are embedded only from this size on.
pub const ASYMPTOTIC_MIN_N: usize = 1000;
/// Significance level of the embedded hypothesis tests.
pub const LEVEL: f64 = 0.01;
/// Sizes 1..=12 are kept, larger ones pooled into this cell.
const TAIL_CELL: u64 = 13;

pub struct Outcome {
    pub results: Value,
    pub tests: Vec<TestRecord>,
    pub table: Table,
}

pub fn dispatch(c: &ExperimentConfig) -> Result<Outcome> {
    match c.experiment {
        Experiment::ErosionStationary => erosion_stationary(c),
        Experiment::OracleCheck => oracle_check(c),
        Experiment::BlockSizeDist => block_size_dist(c),
        Experiment::BlockCountScaling => block_count_scaling(c),
        Experiment::ImmigrationStationary => immigration_stationary(c),
        Experiment::AncestralProgeny => ancestral_progeny(c),
        Experiment::FrequenciesDiffusion => frequencies_diffusion(c),
        Experiment::FrequenciesBridges => frequencies_bridges(c),
        Experiment::CrossValidateSamplers => cross_validate_samplers(c),
        Experiment::Theorem1Compare => theorem1_compare(c),
    }
}

fn erosion_params(c: &ExperimentConfig) -> Result<ErosionParams> {
    Ok(ErosionParams::new(c.n, c.d)?)
}

fn stream(c: &ExperimentConfig, part: &str) -> String {
    format!("{}/{part}", c.experiment.name())
}

fn progeny_law_with_tail() -> BTreeMap<u64, f64> {
    let mut m: BTreeMap<u64, f64> = (1..TAIL_CELL)
        .map(|k| (k, total_progeny_pmf(k).expect("k >= 1")))
        .collect();
    m.insert(TAIL_CELL, total_progeny_tail(TAIL_CELL - 1));
    m
}

fn pmf_table<K: Ord + ToString>(
    columns: Vec<&'static str>,
    e: &EmpiricalPmf<K>,
    reference: impl Fn(&K) -> Option<f64>,
) -> Table {
    let mut t = Table::new(columns);
    let total = e.total() as f64;
    for (k, &count) in e.counts() {
        let mut row = vec![
            k.to_string(),
            count.to_string(),
            (count as f64 / total).to_string(),
        ];
        if let Some(r) = reference(k) {
            row.push(r.to_string());
        }
        t.push(row);
    }
    t
}

fn sorted_frequency_table(rows: &[Vec<f64>], max_rank: usize) -> Result<(Table, Vec<f64>)> {
    let mut t = Table::new(vec!["rank", "mean", "stderr"]);
    let mut means = Vec::new();
    for r in 0..max_rank {
        let xs: Vec<f64> = rows
            .iter()
            .map(|w| w.get(r).copied().unwrap_or(0.0))
            .collect();
        let (m, se) = mean_stderr(&xs)?;
        t.push([(r + 1).to_string(), m.to_string(), se.to_string()]);
        means.push(m);
    }
    Ok((t, means))
}

fn erosion_stationary(c: &ExperimentConfig) -> Result<Outcome> {
    let params = erosion_params(c)?;
    let counts: EmpiricalPmf<usize> =
        replicates(c.seed, &stream(c, "coupling"), c.replicates, |_, rng| {
            sample_stationary(&params, rng).block_count()
        })
        .into_iter()
        .collect();
    let xs: Vec<f64> = counts
        .counts()
        .iter()
        .flat_map(|(&k, &m)| std::iter::repeat_n(k as f64, m as usize))
        .collect();
    let (mean, stderr) = mean_stderr(&xs)?;
    let mut tests = Vec::new();
    let oracle = if c.n <= ORACLE_MAX_N {
        let mut marginal: BTreeMap<usize, f64> = BTreeMap::new();
        for (p, w) in stationary_pmf_small_n(&params)? {
            *marginal.entry(p.block_count()).or_insert(0.0) += w;
        }
        tests.push(TestRecord::from_test(
            "block_count_vs_oracle",
            &chi_square_gof(&counts, &marginal, DEFAULT_MIN_CELL)?,
            LEVEL,
        ));
        Some(marginal)
    } else {
        None
    };
    let table = pmf_table(
        if oracle.is_some() {
            vec!["block_count", "count", "frequency", "oracle"]
        } else {
            vec!["block_count", "count", "frequency"]
        },
        &counts,
        |k| oracle.as_ref().map(|o| o.get(k).copied().unwrap_or(0.0)),
    );
    let sqrt_n = (c.n as f64).sqrt();
    Ok(Outcome {
        results: json!({
            "mean_block_count": mean,
            "stderr_block_count": stderr,
            "rescaled_mean": mean / sqrt_n,
            "rescaled_target": (2.0 * c.d).sqrt(),
            "block_count_pmf": counts.pmf(),
        }),
        tests,
        table,
    })
}

fn oracle_check(c: &ExperimentConfig) -> Result<Outcome> {
    let params = erosion_params(c)?;
    let pi = stationary_pmf_small_n(&params)?;
    let e: EmpiricalPmf<Partition> =
        replicates(c.seed, &stream(c, "coupling"), c.replicates, |_, rng| {
            sample_stationary(&params, rng)
        })
        .into_iter()
        .collect();
    let t = chi_square_gof(&e, &pi, DEFAULT_MIN_CELL)?;
    let residual = generator_residual(&params, &pi);
    let mut table = Table::new(vec!["partition", "count", "empirical", "oracle"]);
    let total = e.total() as f64;
    for (p, w) in &pi {
        let n = e.count(p);
        table.push([
            p.to_string(),
            n.to_string(),
            (n as f64 / total).to_string(),
            w.to_string(),
        ]);
    }
    Ok(Outcome {
        results: json!({
            "states": pi.len(),
            "observed_states": e.counts().len(),
            "chi_square": t.statistic,
            "dof": t.dof,
            "p_value": t.p_value,
            "generator_residual": residual,
        }),
        tests: vec![
            TestRecord::from_test("chi_square_vs_generator_oracle", &t, LEVEL),
            TestRecord::below("generator_residual", residual, 1e-10),
        ],
        table,
    })
}

fn block_size_dist(c: &ExperimentConfig) -> Result<Outcome> {
    let params = erosion_params(c)?;
    let per_rep = replicates(c.seed, &stream(c, "coupling"), c.replicates, |_, rng| {
        sample_stationary(&params, rng).block_sizes()
    });
    let mut sizes: EmpiricalPmf<u64> = EmpiricalPmf::new();
    for s in per_rep.iter().flatten() {
        sizes.add(*s as u64);
    }
    let capped: EmpiricalPmf<u64> = per_rep
        .iter()
        .flatten()
        .map(|&s| (s as u64).min(TAIL_CELL))
        .collect();
    let law = progeny_law_with_tail();
    let tv = tv_distance(&capped.pmf(), &law)?;
    let mut tests = Vec::new();
    if c.n >= ASYMPTOTIC_MIN_N {
        tests.push(TestRecord::below("tv_vs_progeny_law", tv, 0.02));
    }
    let table = pmf_table(
        vec!["size", "count", "frequency", "progeny_pmf"],
        &sizes,
        |&k| total_progeny_pmf(k).ok(),
    );
    let max_size = sizes.counts().keys().next_back().copied().unwrap_or(0);
    Ok(Outcome {
        results: json!({
            "blocks": sizes.total(),
            "max_block_size": max_size,
            "all_singletons": max_size <= 1,
            "tv_capped_at_13": tv,
            "size_pmf": sizes.pmf(),
        }),
        tests,
        table,
    })
}

fn block_count_scaling(c: &ExperimentConfig) -> Result<Outcome> {
    let mut ns: Vec<usize> = [c.n / 100, c.n / 10, c.n]
        .into_iter()
        .filter(|&n| n >= 1)
        .collect();
    ns.dedup();
    let target = (2.0 * c.d).sqrt();
    let mut table = Table::new(vec![
        "n",
        "erosion_mean",
        "erosion_stderr",
        "immigration_mean",
        "immigration_stderr",
        "target",
    ]);
    let mut rows = Vec::new();
    let mut tests = Vec::new();
    for &n in &ns {
        let params = ErosionParams::new(n, c.d)?;
        let xs = replicates(
            c.seed,
            &stream(c, &format!("erosion-{n}")),
            c.replicates,
            |_, rng| sample_stationary(&params, rng).block_count() as f64 / (n as f64).sqrt(),
        );
        let (m, se) = mean_stderr(&xs)?;
        let mut rng = experiment_rng(c.seed, &stream(c, &format!("immigration-{n}")), 0);
        let imm = rescaled_block_count_check(&[n as u64], c.d, c.replicates, &mut rng)?[0];
        table.push([
            n.to_string(),
            m.to_string(),
            se.to_string(),
            imm.mean.to_string(),
            imm.stderr.to_string(),
            target.to_string(),
        ]);
        if n >= ASYMPTOTIC_MIN_N {
            tests.push(TestRecord::below(
                &format!("erosion_relative_error_n{n}"),
                (m / target - 1.0).abs(),
                0.05,
            ));
            tests.push(TestRecord::below(
                &format!("immigration_relative_error_n{n}"),
                (imm.mean / target - 1.0).abs(),
                0.05,
            ));
        }
        rows.push(json!({
            "n": n,
            "erosion_mean": m,
            "erosion_stderr": se,
            "immigration_mean": imm.mean,
            "immigration_stderr": imm.stderr,
        }));
    }
    Ok(Outcome {
        results: json!({ "target": target, "rows": rows }),
        tests,
        table,
    })
}

fn immigration_stationary(c: &ExperimentConfig) -> Result<Outcome> {
    let d_imm = c.n as f64 * c.d;
    let mut rng = experiment_rng(c.seed, &stream(c, "path"), 0);
    let path = simulate_block_count(d_imm, c.horizon, 1, &mut rng)?;
    let law = BlockCountLaw::new(d_imm)?;
    let occupancy = path.occupancy();
    let tv = tv_distance(&occupancy, &law.to_map())?;
    let k_check = law.k_max().min(50);
    let nu = block_count_stationary_pmf(d_imm, k_check + 1)?;
    let balance = (1..=k_check as usize)
        .filter(|&k| nu[k - 1] > 0.0)
        .map(|k| {
            let kf = k as f64;
            let lhs = d_imm * nu[k - 1];
            (lhs - kf * (kf + 1.0) / 2.0 * nu[k]).abs() / lhs
        })
        .fold(0.0, f64::max);
    let mut table = Table::new(vec!["k", "occupancy", "stationary_pmf"]);
    for k in 1..=law.k_max() {
        let occ = occupancy.get(&k).copied().unwrap_or(0.0);
        table.push([k.to_string(), occ.to_string(), law.pmf(k).to_string()]);
    }
    Ok(Outcome {
        results: json!({
            "d_imm": d_imm,
            "t_end": c.horizon,
            "jumps": path.times.len().saturating_sub(1),
            "stationary_mean": law.mean(),
            "k_max": law.k_max(),
            "occupancy_tv": tv,
            "max_balance_error": balance,
        }),
        tests: vec![
            TestRecord::below("occupancy_tv", tv, 0.02),
            TestRecord::below("detailed_balance", balance, 1e-12),
        ],
        table,
    })
}

fn ancestral_progeny(c: &ExperimentConfig) -> Result<Outcome> {
    let law = BlockCountLaw::new(c.n as f64 * c.d)?;
    let opts = AncestralOptions {
        censor_deaths: Some(TAIL_CELL),
        ..Default::default()
    };
    let runs = replicates(c.seed, &stream(c, "ancestral"), c.replicates, |_, rng| {
        simulate_ancestral_with(&law, 2, opts, rng)
            .map(|out| (out.records[0].deaths, out.records[1].deaths, out.rejections))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let first: EmpiricalPmf<u64> = runs.iter().map(|r| r.0.min(TAIL_CELL)).collect();
    let progeny = progeny_law_with_tail();
    let tv = tv_distance(&first.pmf(), &progeny)?;
    let a: Vec<f64> = runs.iter().map(|r| r.0 as f64).collect();
    let b: Vec<f64> = runs.iter().map(|r| r.1 as f64).collect();
    let rho = if runs.len() >= 2 {
        pearson_correlation(&a, &b).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    let rejections: u64 = runs.iter().map(|r| r.2).sum();
    let mut tests = Vec::new();
    if c.n >= ASYMPTOTIC_MIN_N {
        tests.push(TestRecord::below("tv_vs_progeny_law", tv, 0.03));
        tests.push(TestRecord::below("abs_correlation", rho.abs(), 0.02));
    }
    let table = pmf_table(
        vec!["deaths", "count", "frequency", "progeny_pmf"],
        &first,
        |k| progeny.get(k).copied(),
    );
    Ok(Outcome {
        results: json!({
            "d_imm": law.d_imm(),
            "censor_at": TAIL_CELL,
            "tv_capped": tv,
            "correlation": rho,
            "initial_rejections": rejections,
            "deaths_pmf": first.pmf(),
        }),
        tests,
        table,
    })
}

fn frequencies_diffusion(c: &ExperimentConfig) -> Result<Outcome> {
    let runs = replicates(c.seed, &stream(c, "hierarchy"), c.replicates, |_, rng| {
        let h = build_hierarchy(c.k, c.dt, c.horizon, rng)?;
        let z = kernel_transform(&h, c.d)?;
        let sorted = frequencies_from_hierarchy(&h, c.d)?;
        Ok::<_, anyhow::Error>((z[0], sorted.weights().to_vec(), h.mass_defect()))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let z1: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let (m1, se1) = mean_stderr(&z1)?;
    let sorted: Vec<Vec<f64>> = runs.iter().map(|r| r.1.clone()).collect();
    let dust: Vec<f64> = sorted.iter().map(|w| 1.0 - w.iter().sum::<f64>()).collect();
    let (dust_mean, _) = mean_stderr(&dust)?;
    let defect = runs.iter().map(|r| r.2).fold(0.0, f64::max);
    let (table, means) = sorted_frequency_table(&sorted, c.k)?;
    let target = 1.0 / (c.d + 1.0);
    let deviation = (m1 - target).abs();
    Ok(Outcome {
        results: json!({
            "mean_z1": m1,
            "stderr_z1": se1,
            "z1_target": target,
            "mean_dust": dust_mean,
            "max_mass_defect": defect,
            "mean_sorted_frequencies": means,
        }),
        tests: vec![
            TestRecord::below("mass_defect", defect, 1e-9),
            TestRecord::below(
                "z1_mean_deviation_in_stderrs",
                deviation / se1.max(f64::MIN_POSITIVE),
                4.0,
            ),
        ],
        table,
    })
}

fn frequencies_bridges(c: &ExperimentConfig) -> Result<Outcome> {
    let params = erosion_params(c)?;
    let parts = replicates(c.seed, &stream(c, "flow"), c.replicates, |_, rng| {
        sample_stationary_erosion_via_flow(&params, rng)
    });
    let sorted: Vec<Vec<f64>> = parts
        .iter()
        .map(|p| empirical_frequencies(p).weights().to_vec())
        .collect();
    let (table, means) = sorted_frequency_table(&sorted, c.n.min(20))?;
    let blocks: Vec<f64> = parts.iter().map(|p| p.block_count() as f64).collect();
    let (mean_blocks, _) = mean_stderr(&blocks)?;
    let mut tests = Vec::new();
    if c.n <= ORACLE_MAX_N {
        let pi = stationary_pmf_small_n(&params)?;
        let e: EmpiricalPmf<Partition> = parts.into_iter().collect();
        tests.push(TestRecord::from_test(
            "chi_square_vs_generator_oracle",
            &chi_square_gof(&e, &pi, DEFAULT_MIN_CELL)?,
            LEVEL,
        ));
    }
    Ok(Outcome {
        results: json!({
            "mean_block_count": mean_blocks,
            "mean_sorted_frequencies": means,
        }),
        tests,
        table,
    })
}

fn cross_validate_samplers(c: &ExperimentConfig) -> Result<Outcome> {
    let params = erosion_params(c)?;
    let key = |p: &Partition| {
        (
            p.block_count(),
            p.blocks()[p.block_of(1).expect("n >= 1")].len(),
        )
    };
    let a: EmpiricalPmf<(usize, usize)> =
        replicates(c.seed, &stream(c, "coupling"), c.replicates, |_, rng| {
            key(&sample_stationary(&params, rng))
        })
        .into_iter()
        .collect();
    let b: EmpiricalPmf<(usize, usize)> =
        replicates(c.seed, &stream(c, "flow"), c.replicates, |_, rng| {
            key(&sample_stationary_erosion_via_flow(&params, rng))
        })
        .into_iter()
        .collect();
    let t = chi_square_two_sample(&a, &b, DEFAULT_MIN_CELL)?;
    let marginal = |e: &EmpiricalPmf<(usize, usize)>| {
        let mut m: BTreeMap<usize, f64> = BTreeMap::new();
        for ((k, _), w) in e.pmf() {
            *m.entry(k).or_insert(0.0) += w;
        }
        m
    };
    let (ma, mb) = (marginal(&a), marginal(&b));
    let tv = tv_distance(&ma, &mb)?;
    let mut table = Table::new(vec!["block_count", "coupling", "flow"]);
    let keys: std::collections::BTreeSet<usize> = ma.keys().chain(mb.keys()).copied().collect();
    for k in keys {
        let get = |m: &BTreeMap<usize, f64>| m.get(&k).copied().unwrap_or(0.0).to_string();
        table.push([k.to_string(), get(&ma), get(&mb)]);
    }
    Ok(Outcome {
        results: json!({
            "chi_square": t.statistic,
            "dof": t.dof,
            "p_value": t.p_value,
            "block_count_tv": tv,
        }),
        tests: vec![TestRecord::from_test("two_sample_chi_square", &t, LEVEL)],
        table,
    })
}

fn theorem1_compare(c: &ExperimentConfig) -> Result<Outcome> {
    let hier = replicates(c.seed, &stream(c, "hierarchy"), c.replicates, |_, rng| {
        let h = build_hierarchy(c.k, c.dt, c.horizon, rng)?;
        Ok::<_, anyhow::Error>(frequencies_from_hierarchy(&h, c.d)?.largest())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let params = erosion_params(c)?;
    let finite = replicates(c.seed, &stream(c, "erosion"), c.replicates, |_, rng| {
        empirical_frequencies(&sample_stationary(&params, rng)).largest()
    });
    let ks = ks_two_sample(&hier, &finite)?;
    let w1 = wasserstein1(&hier, &finite)?;
    let mut tests = Vec::new();
    if c.n >= ASYMPTOTIC_MIN_N {
        tests.push(TestRecord::from_test("ks_largest_frequency", &ks, LEVEL));
        tests.push(TestRecord::below("w1_largest_frequency", w1, 0.02));
    }
    let quantile = |xs: &[f64], q: f64| {
        let mut s = xs.to_vec();
        s.sort_by(f64::total_cmp);
        s[((q * s.len() as f64) as usize).min(s.len() - 1)]
    };
    let mut table = Table::new(vec!["quantile", "hierarchy", "finite_n"]);
    for i in 1..100 {
        let q = i as f64 / 100.0;
        table.push([
            q.to_string(),
            quantile(&hier, q).to_string(),
            quantile(&finite, q).to_string(),
        ]);
    }
    Ok(Outcome {
        results: json!({
            "mean_largest_hierarchy": mean_stderr(&hier)?.0,
            "mean_largest_finite_n": mean_stderr(&finite)?.0,
            "ks_statistic": ks.statistic,
            "ks_p_value": ks.p_value,
            "w1": w1,
        }),
        tests,
        table,
    })
}
