#ifndef DM_CORE_INTERNAL_H
#define DM_CORE_INTERNAL_H

#include <linux/device-mapper.h>

struct mapped_device {
	char name[16];
	int minor;
	unsigned long flags;
	struct dm_table *map;
	unsigned int open_count;
	unsigned int event_nr;
};

#define DMF_SUSPENDED 1
#define DMF_FREEING 3

#endif
