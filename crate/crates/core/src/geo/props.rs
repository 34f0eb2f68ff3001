use proptest::prelude::*;

use super::*;

/// Full-sort oracle: rank by desirability, then by input position.
fn oracle(records: &[OutcomeRecord], fraction: f64) -> Option<Deciles> {
    let n = records.len();
    let k = (fraction * n as f64).floor() as usize;
    let sign = match records[0].polarity {
        Polarity::HigherIsBetter => 1.0,
        Polarity::LowerIsBetter => -1.0,
    };
    let mut keyed: Vec<(f64, usize)> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (sign * r.value, i))
        .collect();
    keyed.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let best: Vec<usize> = keyed[..k].iter().map(|p| p.1).collect();
    keyed.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let worst: Vec<usize> = keyed[..k].iter().map(|p| p.1).collect();
    if best.iter().any(|i| worst.contains(i)) {
        None
    } else {
        Some(Deciles { best, worst })
    }
}

fn records_strategy() -> impl Strategy<Value = Vec<OutcomeRecord>> {
    let outcome = prop_oneof![
        Just(OutcomeId::GeneralHealth),
        Just(OutcomeId::SocialCapital),
        Just(OutcomeId::Custom(Polarity::HigherIsBetter)),
    ];
    (outcome, prop::collection::vec(0u8..40, 1..300)).prop_map(|(o, vals)| {
        vals.into_iter()
            .map(|v| OutcomeRecord::new(-37.8, 144.9, o, v as f64 / 4.0))
            .collect()
    })
}

fn image_strategy() -> impl Strategy<Value = Vec<ImageRef>> {
    prop::collection::vec((-0.002f64..0.002, -0.002f64..0.002, 0usize..4), 1..120).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (dlat, dlon, h))| ImageRef {
                id: format!("i{i:04}"),
                lat: -37.8 + dlat,
                lon: 144.9 + dlon,
                heading: HEADINGS[h],
                path: format!("i{i:04}.png"),
            })
            .collect()
    })
}

fn location_strategy() -> impl Strategy<Value = Vec<LatLon>> {
    prop::collection::vec((-0.0025f64..0.0025, -0.0025f64..0.0025), 1..60)
        .prop_map(|v| v.into_iter().map(|(a, b)| LatLon::new(-37.8 + a, 144.9 + b)).collect())
}

proptest! {
    #[test]
    fn deciles_match_sort_oracle(records in records_strategy(), f in 0.01f64..=0.5) {
        let got = select_deciles(&records, f);
        match oracle(&records, f) {
            Some(expect) => prop_assert_eq!(got.unwrap(), expect),
            None => {
                let overlapped = matches!(got, Err(GeoError::Overlap { .. }));
                prop_assert!(overlapped);
            }
        }
    }

    #[test]
    fn deciles_are_disjoint(records in records_strategy(), f in 0.01f64..=0.5) {
        if let Ok(d) = select_deciles(&records, f) {
            prop_assert!(d.best.iter().all(|i| !d.worst.contains(i)));
            prop_assert_eq!(d.best.len(), d.worst.len());
        }
    }

    /// A record worse than everything else leaves the best set alone. The
    /// extra record can raise `floor(f·n)` by one, in which case the old best
    /// set is a prefix of the new one.
    #[test]
    fn worse_record_keeps_best(records in records_strategy(), f in 0.01f64..=0.5) {
        let Ok(before) = select_deciles(&records, f) else { return Ok(()); };
        let polarity = records[0].polarity;
        let extreme = match polarity {
            Polarity::HigherIsBetter => -1.0,
            Polarity::LowerIsBetter => 1000.0,
        };
        let mut grown = records.clone();
        grown.push(OutcomeRecord { value: extreme, ..records[0].clone() });
        let Ok(after) = select_deciles(&grown, f) else { return Ok(()); };
        if after.best.len() == before.best.len() {
            prop_assert_eq!(after.best, before.best);
        } else {
            prop_assert_eq!(&after.best[..before.best.len()], &before.best[..]);
        }
    }

    #[test]
    fn matching_equals_brute_force(
        locs in location_strategy(), images in image_strategy(), radius in 0.0f64..150.0,
    ) {
        prop_assert_eq!(
            match_images(&locs, &images, radius),
            match_images_brute_force(&locs, &images, radius)
        );
    }

    #[test]
    fn matching_ignores_index_order(
        locs in location_strategy(), images in image_strategy(), rot in 0usize..200,
    ) {
        let mut shuffled = images.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        prop_assert_eq!(match_images(&locs, &images, 50.0), match_images(&locs, &shuffled, 50.0));
    }

    #[test]
    fn haversine_symmetric_nonnegative(
        a in (-90.0f64..=90.0, -180.0f64..=180.0), b in (-90.0f64..=90.0, -180.0f64..=180.0),
    ) {
        let (p, q) = (LatLon::new(a.0, a.1), LatLon::new(b.0, b.1));
        let d = haversine_m(p, q);
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d, haversine_m(q, p));
    }
}
