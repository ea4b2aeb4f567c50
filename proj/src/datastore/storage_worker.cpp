#include "makesense/datastore/storage_worker.hpp"

namespace makesense::datastore {

StorageWorker::StorageWorker(Scheduler& scheduler, broker::Broker& broker, HistoricalStore& store, LiveWindow* live,
                             Options options)
    : scheduler_(scheduler), broker_(broker), store_(store), live_(live), options_(std::move(options)) {}

StorageWorker::~StorageWorker() { kill(); }

void StorageWorker::start() {
  if (consumer_) return;
  consumer_ = broker_.consume(
      options_.queue, [this](const broker::Delivery& d) { batch_.push_back(d); }, options_.prefetch);
  arm();
}

void StorageWorker::arm() {
  timer_ = scheduler_.after(options_.flush_interval, [this] {
    timer_ = 0;
    flush();
    if (consumer_) arm();
  });
}

void StorageWorker::kill() {
  if (!consumer_) return;
  broker_.cancel(consumer_);
  consumer_ = 0;
  scheduler_.cancel(timer_);
  timer_ = 0;
  batch_.clear();
}

void StorageWorker::stop() {
  if (!consumer_) return;
  flush();
  kill();
}

void StorageWorker::flush() {
  if (batch_.empty()) return;
  std::vector<broker::Delivery> batch;
  batch.swap(batch_);
  for (const auto& d : batch) {
    ++stats_.received;
    SensorReading r;
    try {
      r = decode_reading(*d.payload);
    } catch (const DecodeError&) {
      ++stats_.undecodable;
      continue;
    }
    if (store_.append(r) == HistoricalStore::Append::Stored) {
      ++stats_.stored;
      if (live_) live_->push(r);
    } else {
      ++stats_.duplicates;
    }
  }
  store_.flush();
  ++stats_.flushes;
  for (const auto& d : batch) broker_.ack(d.queue, d.tag);
}

}  // namespace makesense::datastore
