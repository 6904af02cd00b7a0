use apifk_bench::{sms_log, values_of};
use apifk_core::abstraction::{common_subsequence, pattern_of, profile_values};
use apifk_core::dependency::{session_relevance, RankWeights, Ranker};
use apifk_core::knowledge::{mine_knowledge, MineConfig};
use apifk_core::sequences::{mine_sequences, FilterConfig};
use apifk_core::simulator::Scenario;
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn abstraction(c: &mut Criterion) {
    let log = sms_log(10_000);
    let phones = values_of(&log, "SendSms", "PhoneNumbers");
    let params = values_of(&log, "SendSms", "TemplateParam");

    c.bench_function("pattern_of/template_param", |b| {
        b.iter(|| params.iter().map(|v| pattern_of(black_box(v)).len()).sum::<usize>())
    });
    let mut group = c.benchmark_group("common_subsequence");
    for n in [16, 128, 1024] {
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &phones[..n], |b, vals| {
            b.iter(|| common_subsequence(black_box(vals)).unwrap())
        });
    }
    group.finish();
    c.bench_function("profile_values/phones", |b| {
        b.iter(|| profile_values(black_box(&phones), 1024, 256).unwrap())
    });
}

fn sequences_and_ranking(c: &mut Criterion) {
    let log = sms_log(10_000);
    let filter = FilterConfig::default();
    c.bench_function("mine_sequences/10k", |b| b.iter(|| mine_sequences(black_box(&log), &filter)));

    let catalog = Scenario::sms(0).catalog().unwrap();
    let relevance = session_relevance(&log);
    let ranker = Ranker::new(&catalog, &relevance, RankWeights::default());
    c.bench_function("rank_all/SendSms", |b| b.iter(|| ranker.rank_all(black_box("SendSms"), 5)));

    let mut group = c.benchmark_group("mine_knowledge");
    group.sample_size(10);
    group.bench_function("10k", |b| {
        b.iter(|| mine_knowledge(black_box(&log), &catalog, &MineConfig::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, abstraction, sequences_and_ranking);
criterion_main!(benches);
