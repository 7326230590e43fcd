//! Acceptance suite: one PASS/FAIL line per criterion, each with its
//! runtime limit. Exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use latent_capacity::broadcast::{build_down_scheme, build_up_scheme, run_end_to_end, sample_instance};
use latent_capacity::erasure::{rs_decode, rs_encode, FieldElement, MdsCodeSpec};
use latent_capacity::exactmath::Rational;
use latent_capacity::exchange::{identities, phi, ExchangeTable};
use latent_capacity::infotools::{run_submodularity_trials, MARGIN_TOLERANCE};
use latent_capacity::polyhedra::{
    latent_facets, rate_point, vertices3, AffineInequality, FacetOptions, Variable,
};
use latent_capacity::region::{
    is_separator, member, sample_rates_with, support_lp, support_partition, DirectionVector, RateVector,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn q(s: &str) -> Rational {
    s.parse().expect("literal rational")
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn exchange_rates() -> Result<String, String> {
    let a = phi(2, 1, 2).map_err(|e| e.to_string())?;
    let b = phi(2, 2, 1).map_err(|e| e.to_string())?;
    ensure(a == Rational::one(), format!("phi(2,1,2) = {a}"))?;
    ensure(b == q("1/2"), format!("phi(2,2,1) = {b}"))?;
    Ok(format!("phi(2,1,2) = {a}, phi(2,2,1) = {b}"))
}

fn identity_suite() -> Result<String, String> {
    let violations = identities::check_up_to(12);
    ensure(violations.is_empty(), format!("{} violations, first {:?}", violations.len(), violations.first()))?;
    let mut strict = 0usize;
    for k in 1..=12usize {
        let t = ExchangeTable::new(k).map_err(|e| e.to_string())?;
        for i in 1..=k {
            for j in 1..=k {
                for l in 1..=k {
                    let monotone = (i <= j && j <= l) || (i >= j && j >= l);
                    if !monotone {
                        ensure(t.get(i, l) > &(t.get(i, j) * t.get(j, l)), format!("strict clause at K={k} ({i},{j},{l})"))?;
                        strict += 1;
                    }
                }
            }
        }
    }
    Ok(format!(
        "{} identities exact for K <= 12; strict clause holds on {strict} non-monotone triples",
        identities::NAMES.len()
    ))
}

fn k3_facet_families() -> Vec<AffineInequality> {
    [[3, 6, 2], [2, 2, 1], [1, 2, 1], [3, 3, 1]]
        .iter()
        .map(|c| {
            let mut coefs = Vec::new();
            for (n, &x) in c.iter().enumerate() {
                coefs.push((Variable::Rate(n + 1), Rational::from(x)));
                coefs.push((Variable::Budget(n + 1), Rational::from(-x)));
            }
            AffineInequality::new(coefs, Rational::zero())
        })
        .collect()
}

fn k3_facets() -> Result<String, String> {
    let out = latent_capacity::cli::run(["latcap", "facets", "--k", "3", "--symbolic"]);
    ensure(out.code == 0, format!("cli exit {}", out.code))?;
    let json: serde_json::Value = serde_json::from_str(&out.stdout).map_err(|e| e.to_string())?;
    let texts: Vec<String> = json["inequalities"]
        .as_array()
        .ok_or("no inequality list")?
        .iter()
        .map(|r| r["text"].as_str().unwrap_or_default().to_string())
        .collect();
    let mut expected: Vec<AffineInequality> = k3_facet_families();
    for i in 1..=3 {
        expected.push(AffineInequality::new([(Variable::Rate(i), Rational::from(-1))], Rational::zero()));
        expected.push(AffineInequality::new([(Variable::Budget(i), Rational::from(-1))], Rational::zero()));
    }
    let mut want: Vec<String> = expected.iter().map(|r| r.to_string()).collect();
    let mut got = texts.clone();
    want.sort();
    got.sort();
    ensure(got == want, format!("got {got:?}"))?;
    Ok("4 facet families (3,6,2) (2,2,1) (1,2,1) (3,3,1) plus R >= 0, R* >= 0; nothing else".into())
}

fn instantiated_122() -> Result<String, String> {
    let rstar = RateVector::new(vec![q("1"), q("2"), q("2")]).map_err(|e| e.to_string())?;
    let system = latent_facets(3, false, Some(&rstar), FacetOptions::default()).map_err(|e| e.to_string())?;
    let dims = [Variable::Rate(1), Variable::Rate(2), Variable::Rate(3)];
    let mut rhs = Vec::new();
    for row in k3_facet_families() {
        let coefs: Vec<(Variable, Rational)> = dims.iter().map(|v| (*v, row.coefficient(*v))).collect();
        let found = system
            .rows()
            .find(|r| dims.iter().all(|v| r.coefficient(*v) == row.coefficient(*v)))
            .ok_or_else(|| format!("no instantiated row with coefficients {coefs:?}"))?;
        rhs.push(found.constant().clone());
    }
    let want: Vec<Rational> = ["19", "8", "7", "11"].iter().map(|s| q(s)).collect();
    ensure(rhs == want, format!("right-hand sides {rhs:?}"))?;
    let vertices = vertices3(&system).map_err(|e| e.to_string())?;
    for p in [["1", "2", "2"], ["0", "0", "7"], ["11/3", "0", "0"]] {
        let p = [q(p[0]), q(p[1]), q(p[2])];
        ensure(vertices.iter().any(|v| v.point == p), format!("missing vertex {p:?}"))?;
    }
    Ok(format!(
        "rhs (19, 8, 7, 11); {} vertices incl. (1,2,2), (0,0,7), (11/3,0,0)",
        vertices.len()
    ))
}

fn random_direction(rng: &mut ChaCha8Rng, k: usize) -> DirectionVector {
    loop {
        let d = sample_rates_with(rng, k, &q("4")).expect("bound is non-negative");
        if d.as_slice().iter().any(|x| !x.is_zero()) {
            return DirectionVector::new(d.into_inner()).expect("non-negative");
        }
    }
}

fn dual_support() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in 2..=5usize {
        for n in 0..1000 {
            let rstar = sample_rates_with(&mut rng, k, &q("5")).map_err(|e| e.to_string())?;
            let a = DirectionVector::new(sample_rates_with(&mut rng, k, &q("3")).map_err(|e| e.to_string())?.into_inner())
                .map_err(|e| e.to_string())?;
            let lp = support_lp(k, &rstar, &a).map_err(|e| e.to_string())?;
            let part = support_partition(k, &rstar, &a).map_err(|e| e.to_string())?;
            ensure(lp.value == part.value, format!("K={k} instance {n}: {} vs {}", lp.value, part.value))?;
        }
    }
    Ok("1000 instances each for K = 2..5, exact equality".into())
}

fn boundary() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let factor = q("101/100");
    for n in 0..500 {
        let k = rng.gen_range(1..=4);
        let base = sample_rates_with(&mut rng, k, &q("4")).map_err(|e| e.to_string())?;
        let rstar = RateVector::new(base.as_slice().iter().map(|x| x + &q("1/4")).collect()).map_err(|e| e.to_string())?;
        let a = random_direction(&mut rng, k);
        let support = support_lp(k, &rstar, &a).map_err(|e| e.to_string())?;
        let point = support.point();
        ensure(member(k, &rstar, &point).map_err(|e| e.to_string())?.is_inside(), format!("case {n}: support point outside"))?;
        let scaled = point.scale(&factor).map_err(|e| e.to_string())?;
        ensure(!member(k, &rstar, &scaled).map_err(|e| e.to_string())?.is_inside(), format!("case {n}: scaled point inside"))?;
        ensure(is_separator(k, &rstar, &a, &scaled).map_err(|e| e.to_string())?, format!("case {n}: direction rejected"))?;
    }
    Ok("500 directions: support point Inside, 1.01x Outside, direction separates".into())
}

fn fm_lp() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut counts = BTreeMap::new();
    for k in 2..=3usize {
        let facets = latent_facets(k, true, None, FacetOptions::default()).map_err(|e| e.to_string())?;
        let (mut inside, mut outside) = (0, 0);
        for n in 0..1000 {
            let rstar = sample_rates_with(&mut rng, k, &q("3")).map_err(|e| e.to_string())?;
            let rates = sample_rates_with(&mut rng, k, &q("5")).map_err(|e| e.to_string())?;
            let by_facets = facets.is_satisfied_by(&rate_point(&rates, Some(&rstar)));
            let by_lp = member(k, &rstar, &rates).map_err(|e| e.to_string())?.is_inside();
            ensure(by_facets == by_lp, format!("K={k} point {n} disagrees"))?;
            if by_lp {
                inside += 1;
            } else {
                outside += 1;
            }
        }
        counts.insert(k, (inside, outside));
    }
    Ok(format!(
        "0 disagreements; (inside, outside) K=2 {:?}, K=3 {:?}",
        counts[&2], counts[&3]
    ))
}

fn mds() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut exhaustive = 0usize;
    for n in 1..=10usize {
        for k in 1..=n {
            let spec = MdsCodeSpec::new(n, k).map_err(|e| e.to_string())?;
            let data: Vec<FieldElement> = (0..k).map(|_| FieldElement(rng.gen())).collect();
            let code = rs_encode(&spec, &data).map_err(|e| e.to_string())?;
            for mask in 0u32..(1 << n) {
                if (mask.count_ones() as usize) < k {
                    continue;
                }
                let shares: Vec<_> = (0..n).filter(|p| mask >> p & 1 == 1).map(|p| (p, code[p])).collect();
                ensure(rs_decode(&spec, &shares).map_err(|e| e.to_string())? == data, format!("({n},{k}) mask {mask:#b}"))?;
                exhaustive += 1;
            }
        }
    }
    let mut sampled = 0usize;
    for _ in 0..20 {
        let n = rng.gen_range(11..=60);
        let k = rng.gen_range(1..=n);
        let spec = MdsCodeSpec::new(n, k).map_err(|e| e.to_string())?;
        let data: Vec<FieldElement> = (0..k).map(|_| FieldElement(rng.gen())).collect();
        let code = rs_encode(&spec, &data).map_err(|e| e.to_string())?;
        let mut positions: Vec<usize> = (0..n).collect();
        for _ in 0..1000 {
            positions.shuffle(&mut rng);
            let keep = rng.gen_range(k..=n);
            let shares: Vec<_> = positions[..keep].iter().map(|&p| (p, code[p])).collect();
            ensure(rs_decode(&spec, &shares).map_err(|e| e.to_string())? == data, format!("({n},{k}) random pattern"))?;
            sampled += 1;
        }
    }
    Ok(format!("{exhaustive} exhaustive patterns (n <= 10), {sampled} random patterns (20 specs, n <= 60), 0 failures"))
}

fn achievability() -> Result<String, String> {
    let single = |source: usize, target: usize, s: usize| -> Result<Rational, String> {
        let scheme = if source < target {
            build_up_scheme(3, source, target, s)
        } else {
            build_down_scheme(3, source, target, s)
        }
        .map_err(|e| e.to_string())?;
        let mut caps = vec![0; 3];
        caps[source - 1] = s;
        let mut alloc = vec![vec![0; 3]; 3];
        alloc[source - 1][target - 1] = s;
        let report = run_end_to_end(3, &caps, &alloc, 5).map_err(|e| e.to_string())?;
        ensure(report.success, format!("{source}->{target} failed to decode"))?;
        ensure(
            report.delivered_symbols[target - 1] == scheme.payload(),
            format!("{source}->{target} payload mismatch"),
        )?;
        Ok(&Rational::from(scheme.payload()) / &Rational::from(s))
    };
    ensure(single(2, 3, 1)? == q("2"), "2->3 ratio")?;
    ensure(single(3, 1, 3)? == q("1/3"), "3->1 ratio")?;
    ensure(single(1, 2, 2)? == q("1/2"), "1->2 ratio")?;
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut composites = 0;
    while composites < 200 {
        let (caps, alloc) = sample_instance(3, 6, &mut rng);
        if alloc.iter().flatten().all(|&x| x == 0) {
            continue;
        }
        let report = run_end_to_end(3, &caps, &alloc, composites as u64).map_err(|e| e.to_string())?;
        ensure(report.success, format!("composite {composites} failed to decode: {caps:?} {alloc:?}"))?;
        ensure(report.rates_exact, format!("composite {composites} rates off: {caps:?} {alloc:?}"))?;
        composites += 1;
    }
    Ok("payload ratios 2, 1/3, 1/2; 200 random composites decoded bit-exactly by every receiver".into())
}

fn submodularity() -> Result<String, String> {
    let r = run_submodularity_trials(10_000, 2718).map_err(|e| e.to_string())?;
    ensure(r.pairwise.min_margin >= -MARGIN_TOLERANCE, format!("pairwise margin {}", r.pairwise.min_margin))?;
    ensure(r.kway.min_margin >= -MARGIN_TOLERANCE, format!("k-way margin {}", r.kway.min_margin))?;
    ensure(r.passed(), "violations recorded")?;
    Ok(format!(
        "10000 trials; min margins pairwise {:.3e}, k-way {:.3e} (tolerance -1e-9)",
        r.pairwise.min_margin, r.kway.min_margin
    ))
}

fn main() {
    let criteria: [(&str, u64, Check); 10] = [
        ("exchange rates", 1, exchange_rates),
        ("exchange-rate identities", 10, identity_suite),
        ("K=3 facets", 30, k3_facets),
        ("R*=(1,2,2) facets and vertices", 10, instantiated_122),
        ("support: LP vs partition", 120, dual_support),
        ("boundary discipline", 120, boundary),
        ("facets vs membership", 60, fm_lp),
        ("MDS erasure patterns", 60, mds),
        ("end-to-end achievability", 120, achievability),
        ("submodularity", 120, submodularity),
    ];
    let mut failures = 0;
    for (n, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let limit = Duration::from_secs(*limit);
        let (status, detail) = match result {
            Ok(detail) if elapsed <= limit => ("PASS", detail),
            Ok(detail) => ("FAIL", format!("{detail}; too slow")),
            Err(why) => ("FAIL", why),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!(
            "[{status}] {:>2}. {name}: {detail} ({:.2}s, limit {}s)",
            n + 1,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
