#ifndef _LINUX_DEVICE_MAPPER_H
#define _LINUX_DEVICE_MAPPER_H

#include <linux/types.h>

struct dm_target;
struct dm_table;
struct mapped_device;

typedef int (*dm_message_fn) (struct dm_target *ti, unsigned int argc, char **argv,
			      char *result, unsigned int maxlen);

struct target_type {
	__u64 features;
	const char *name;
	unsigned int version[3];
	dm_message_fn message;
};

struct dm_target {
	struct dm_table *table;
	struct target_type *type;
	sector_t begin;
	sector_t len;
	char *error;
};

int dm_register_target(struct target_type *t);
void dm_unregister_target(struct target_type *t);

#endif
